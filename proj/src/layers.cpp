#include "mdfr/layers.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mdfr::nn {

VarPtr ParamStore::add(const std::string& name, Tensor init, bool requires_grad) {
  if (index_.count(name)) throw InvalidArgumentError("ParamStore: duplicate name " + name);
  auto var = Variable::leaf(std::move(init), requires_grad);
  index_[name] = entries_.size();
  entries_.emplace_back(name, var);
  return var;
}

VarPtr ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgumentError("ParamStore: unknown name " + name);
  return entries_[it->second].second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, var] : entries_) n += var->value.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, var] : entries_) {
    var->ensure_grad();
    var->zero_grad();
  }
}

void ParamStore::set_requires_grad(bool on) {
  for (auto& [name, var] : entries_) var->requires_grad = on;
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, var] : entries_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(var->value.data(), var->value.numel() * sizeof(double), h);
  }
  return h;
}

void ParamStore::load_values(const std::map<std::string, Tensor>& tensors) {
  for (auto& [name, var] : entries_) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint missing tensor: " + name);
    if (!it->second.same_shape(var->value))
      throw ShapeError("checkpoint tensor " + name + " has shape " +
                       it->second.shape_string() + ", expected " + var->value.shape_string());
    var->value = it->second;
  }
}

// ---- checkpoint archive ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'D', 'F', 'R', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  if (n > (std::uint64_t(1) << 30)) throw DataError("checkpoint: oversized string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& role,
                     const std::map<std::string, std::string>& config,
                     const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_string(os, role);
  write_u64(os, config.size());
  for (const auto& [k, v] : config) {
    write_string(os, k);
    write_string(os, v);
  }
  write_u64(os, params.entries().size());
  for (const auto& [name, var] : params.entries()) {
    write_string(os, name);
    const auto& t = var->value;
    write_u64(os, static_cast<std::uint64_t>(t.n()));
    write_u64(os, static_cast<std::uint64_t>(t.c()));
    write_u64(os, static_cast<std::uint64_t>(t.h()));
    write_u64(os, static_cast<std::uint64_t>(t.w()));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint archive: " + path);
  Checkpoint ck;
  ck.role = read_string(is);
  const std::uint64_t n_cfg = read_u64(is);
  for (std::uint64_t i = 0; i < n_cfg; ++i) {
    std::string k = read_string(is);
    ck.config[k] = read_string(is);
  }
  const std::uint64_t n_tensors = read_u64(is);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = read_string(is);
    const int n = static_cast<int>(read_u64(is));
    const int c = static_cast<int>(read_u64(is));
    const int h = static_cast<int>(read_u64(is));
    const int w = static_cast<int>(read_u64(is));
    Tensor t(n, c, h, w);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  if (!is) throw DataError("truncated checkpoint: " + path);
  return ck;
}

// ---- initialisation ----------------------------------------------------------

Tensor init_conv_weight(RandomStream& rng, int out_c, int in_c, int k) {
  Tensor w(out_c, in_c, k, k);
  const double bound = std::sqrt(6.0 / (in_c * k * k));
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

Tensor init_linear_weight(RandomStream& rng, int out_c, int in_c) {
  Tensor w(out_c, in_c, 1, 1);
  const double bound = std::sqrt(6.0 / in_c);
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

Conv2dLayer make_conv(ParamStore& params, RandomStream& rng, const std::string& name,
                      int in_c, int out_c, int k, int stride, int pad) {
  Conv2dLayer layer;
  layer.weight = params.add(name + ".weight", init_conv_weight(rng, out_c, in_c, k));
  layer.bias = params.add(name + ".bias", Tensor(1, out_c, 1, 1));
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

LinearLayer make_linear(ParamStore& params, RandomStream& rng, const std::string& name,
                        int in_c, int out_c) {
  LinearLayer layer;
  layer.weight = params.add(name + ".weight", init_linear_weight(rng, out_c, in_c));
  layer.bias = params.add(name + ".bias", Tensor(1, out_c, 1, 1));
  return layer;
}

} // namespace mdfr::nn
