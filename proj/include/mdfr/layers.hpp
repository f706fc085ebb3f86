#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdfr/autograd.hpp"

namespace mdfr::nn {

// Ordered collection of named learnable tensors. Ownership of weights for one
// network; supplies checkpoint IO, freeze hashing and gradient bookkeeping.
class ParamStore {
 public:
  VarPtr add(const std::string& name, Tensor init, bool requires_grad = true);
  VarPtr get(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<std::pair<std::string, VarPtr>>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  void zero_grads();
  void set_requires_grad(bool on);
  std::uint64_t hash() const; // over names + raw value bytes, in insertion order

  // Replace values with same-named tensors; shapes must match exactly.
  void load_values(const std::map<std::string, Tensor>& tensors);

 private:
  std::vector<std::pair<std::string, VarPtr>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Binary checkpoint archive: role tag, config key/value block, named tensors.
struct Checkpoint {
  std::string role;
  std::map<std::string, std::string> config;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const std::string& role,
                     const std::map<std::string, std::string>& config,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::string& path);

// ---- layers ----------------------------------------------------------------

struct Conv2dLayer {
  VarPtr weight; // (out, in, k, k)
  VarPtr bias;   // (1, out, 1, 1)
  int stride = 1;
  int pad = 1;

  VarPtr operator()(const VarPtr& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct LinearLayer {
  VarPtr weight; // (out, in, 1, 1)
  VarPtr bias;   // (1, out, 1, 1)

  VarPtr operator()(const VarPtr& x) const { return linear(x, weight, bias); }
};

// Kaiming-uniform initialisation, seeded.
Tensor init_conv_weight(RandomStream& rng, int out_c, int in_c, int k);
Tensor init_linear_weight(RandomStream& rng, int out_c, int in_c);

Conv2dLayer make_conv(ParamStore& params, RandomStream& rng, const std::string& name,
                      int in_c, int out_c, int k, int stride, int pad);
LinearLayer make_linear(ParamStore& params, RandomStream& rng, const std::string& name,
                        int in_c, int out_c);

} // namespace mdfr::nn
