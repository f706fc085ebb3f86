#include "mdfr/generator.hpp"

#include <cmath>

namespace mdfr::gen {

int GeneratorConfig::decoder_input_channels(int block) const {
  if (block < 1 || block > kDecoderBlocks)
    throw InvalidArgumentError("decoder_input_channels: block out of range");
  const auto dec = decoder_channels();
  int ch = decoder_entry_channels();
  for (int k = 1; k < block; ++k) ch += dec[k - 1];
  return ch;
}

void GeneratorConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    throw InvalidArgumentError("generator config: image_size must be a positive multiple of 32");
  if (base_channels < 1 || bottleneck_channels < 1)
    throw InvalidArgumentError("generator config: channel widths must be positive");
  if (heatmap_channels != geometry::kNumKeypoints)
    throw InvalidArgumentError("generator config: heatmap channels must match keypoint count");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw InvalidArgumentError("generator config: leaky slope out of range");
}

std::map<std::string, std::string> GeneratorConfig::to_kv() const {
  return {{"image_size", std::to_string(image_size)},
          {"base_channels", std::to_string(base_channels)},
          {"bottleneck_channels", std::to_string(bottleneck_channels)},
          {"heatmap_channels", std::to_string(heatmap_channels)},
          {"leaky_slope", format_double(leaky_slope)}};
}

GeneratorConfig GeneratorConfig::from_kv(const std::map<std::string, std::string>& kv) {
  GeneratorConfig cfg;
  cfg.image_size = std::stoi(kv.at("image_size"));
  cfg.base_channels = std::stoi(kv.at("base_channels"));
  cfg.bottleneck_channels = std::stoi(kv.at("bottleneck_channels"));
  cfg.heatmap_channels = std::stoi(kv.at("heatmap_channels"));
  cfg.leaky_slope = std::stod(kv.at("leaky_slope"));
  cfg.validate();
  return cfg;
}

std::string role_name(Role role) { return role == Role::kFRN ? "FRN" : "FFN"; }

Role role_from_name(const std::string& name) {
  if (name == "FRN") return Role::kFRN;
  if (name == "FFN") return Role::kFFN;
  throw InvalidArgumentError("unknown generator role: " + name);
}

Generator::Generator(Role role, const GeneratorConfig& cfg, std::uint64_t init_seed)
    : role_(role), cfg_(cfg) {
  cfg_.validate();
  RandomStream rng(derive_seed(init_seed, role == Role::kFRN ? 0xF1 : 0xF2));
  const auto enc = cfg_.encoder_channels();
  const auto dec = cfg_.decoder_channels();

  image_stem_ = nn::make_conv(params_, rng, "enc.image_stem", 3, enc[0], 3, 2, 1);
  heatmap_stem_ =
      nn::make_conv(params_, rng, "enc.heatmap_stem", cfg_.heatmap_channels, enc[0], 3, 2, 1);
  for (int k = 1; k < GeneratorConfig::kEncoderBlocks; ++k)
    trunk_.push_back(nn::make_conv(params_, rng, "enc.trunk" + std::to_string(k), enc[k - 1],
                                   enc[k], 3, 2, 1));
  for (int k = 1; k <= GeneratorConfig::kDecoderBlocks; ++k)
    decoder_.push_back(nn::make_conv(params_, rng, "dec.block" + std::to_string(k),
                                     cfg_.decoder_input_channels(k), dec[k - 1], 3, 1, 1));
  rgb_ = nn::make_conv(params_, rng, "dec.rgb", dec.back(), 3, 3, 1, 1);
}

void Generator::check_image(const nn::Tensor& t) const {
  if (t.c() != 3 || t.h() != cfg_.image_size || t.w() != cfg_.image_size)
    throw ShapeError("generator: expected (N,3," + std::to_string(cfg_.image_size) + "," +
                     std::to_string(cfg_.image_size) + ") image, got " + t.shape_string());
}

void Generator::check_heatmap(const nn::Tensor& t) const {
  if (t.c() != cfg_.heatmap_channels || t.h() != cfg_.image_size || t.w() != cfg_.image_size)
    throw ShapeError("generator: heatmap stack has shape " + t.shape_string());
}

nn::VarPtr Generator::encode_image_var(const nn::VarPtr& img) const {
  check_image(img->value);
  nn::VarPtr h = nn::leaky_relu(image_stem_(img), cfg_.leaky_slope);
  for (const auto& block : trunk_) h = nn::leaky_relu(block(h), cfg_.leaky_slope);
  return h;
}

nn::VarPtr Generator::encode_heatmap_var(const nn::VarPtr& hm) const {
  check_heatmap(hm->value);
  nn::VarPtr h = nn::leaky_relu(heatmap_stem_(hm), cfg_.leaky_slope);
  for (const auto& block : trunk_) h = nn::leaky_relu(block(h), cfg_.leaky_slope);
  return h;
}

nn::VarPtr Generator::pose_residual_var(const nn::VarPtr& lp, const nn::VarPtr& lt) const {
  return nn::sub(encode_heatmap_var(lp), encode_heatmap_var(lt));
}

Generator::Decoded Generator::decode_var(const nn::VarPtr& code, bool trace,
                                         int zero_block) const {
  const int cb = cfg_.bottleneck_channels;
  const int s = cfg_.bottleneck_spatial();
  const auto& cv = code->value;
  if (cv.h() != s || cv.w() != s)
    throw ShapeError("decode: expected " + std::to_string(s) + "x" + std::to_string(s) +
                     " code, got " + cv.shape_string());
  nn::VarPtr entry;
  if (cv.c() == cfg_.decoder_entry_channels()) {
    entry = code;
  } else if (cv.c() == cb) {
    // Restoration path: pad to the entry width so both decoders stay
    // shape-congruent with the frontalization net.
    auto zeros = nn::Variable::leaf(nn::Tensor(cv.n(), cb, s, s));
    entry = nn::concat_channels({code, zeros});
  } else {
    throw ShapeError("decode: code must have " + std::to_string(cb) + " or " +
                     std::to_string(cfg_.decoder_entry_channels()) + " channels, got " +
                     cv.shape_string());
  }

  Decoded out;
  std::vector<nn::VarPtr> blocks; // blocks[0] = entry, blocks[k] = output of block k
  blocks.push_back(entry);
  for (int k = 1; k <= GeneratorConfig::kDecoderBlocks; ++k) {
    // Dense wiring: the first convolution of block k sees the entry code and
    // every earlier block output, lower resolutions upsampled (nearest).
    const int res = blocks.back()->value.h();
    std::vector<nn::VarPtr> parts;
    for (int i = static_cast<int>(blocks.size()) - 1; i >= 0; --i) {
      nn::VarPtr p = blocks[i];
      if (p->value.h() != res) p = nn::upsample_nearest(p, res / p->value.h());
      parts.push_back(p);
    }
    nn::VarPtr input = nn::concat_channels(parts);
    if (trace) out.block_inputs.push_back(input);
    nn::VarPtr h = nn::leaky_relu(decoder_[k - 1](input), cfg_.leaky_slope);
    h = nn::upsample_nearest(h, 2);
    if (k == zero_block) h = nn::affine(h, 0.0, 0.0);
    blocks.push_back(h);
  }
  out.last_features = blocks.back();
  out.image = nn::sigmoid(rgb_(out.last_features));
  return out;
}

Generator::Decoded Generator::restore_var(const nn::VarPtr& img) const {
  return decode_var(encode_image_var(img));
}

Generator::Decoded Generator::frontalize_var(const nn::VarPtr& img, const nn::VarPtr& lp,
                                             const nn::VarPtr& lt) const {
  nn::VarPtr code = encode_image_var(img);
  nn::VarPtr residual = pose_residual_var(lp, lt);
  return decode_var(nn::concat_channels({code, residual}));
}

// ---- plain API ------------------------------------------------------------

FeatureTensor Generator::encode(const FaceImage& img) const {
  auto code = encode_image_var(nn::Variable::leaf(nn::to_tensor(img)));
  return {code->value, 0, role_name(role_)};
}

FeatureTensor Generator::encode_pose(const geometry::HeatmapStack& hm) const {
  auto code = encode_heatmap_var(nn::Variable::leaf(nn::to_tensor(hm)));
  return {code->value, 0, role_name(role_)};
}

FeatureTensor Generator::pose_residual(const geometry::HeatmapStack& lp,
                                       const geometry::HeatmapStack& lt) const {
  auto r = pose_residual_var(nn::Variable::leaf(nn::to_tensor(lp)),
                             nn::Variable::leaf(nn::to_tensor(lt)));
  return {r->value, 0, role_name(role_)};
}

FaceImage Generator::decode(const FeatureTensor& code) const {
  auto d = decode_var(nn::Variable::leaf(code.values));
  return nn::to_image(d.image->value);
}

FaceImage Generator::restore(const FaceImage& img) const {
  auto d = restore_var(nn::Variable::leaf(nn::to_tensor(img)));
  return nn::to_image(d.image->value);
}

FaceImage Generator::frontalize(const FaceImage& img, const geometry::HeatmapStack& lp,
                                const geometry::HeatmapStack& lt) const {
  auto d = frontalize_var(nn::Variable::leaf(nn::to_tensor(img)),
                          nn::Variable::leaf(nn::to_tensor(lp)),
                          nn::Variable::leaf(nn::to_tensor(lt)));
  return nn::to_image(d.image->value);
}

FeatureTensor Generator::last_block_features(const FaceImage& img) const {
  auto d = restore_var(nn::Variable::leaf(nn::to_tensor(img)));
  return {d.last_features->value, GeneratorConfig::kDecoderBlocks, role_name(role_)};
}

FeatureTensor Generator::last_block_features(const FaceImage& img,
                                             const geometry::HeatmapStack& lp,
                                             const geometry::HeatmapStack& lt) const {
  auto d = frontalize_var(nn::Variable::leaf(nn::to_tensor(img)),
                          nn::Variable::leaf(nn::to_tensor(lp)),
                          nn::Variable::leaf(nn::to_tensor(lt)));
  return {d.last_features->value, GeneratorConfig::kDecoderBlocks, role_name(role_)};
}

// ---- checkpoints ------------------------------------------------------------

void Generator::save(const std::string& path) const {
  auto kv = cfg_.to_kv();
  kv["role"] = role_name(role_);
  nn::save_checkpoint(path, role_name(role_), kv, params_);
}

Generator Generator::from_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  Generator g(role_from_name(ck.role), GeneratorConfig::from_kv(ck.config), 0);
  g.params_.load_values(ck.tensors);
  return g;
}

} // namespace mdfr::gen
