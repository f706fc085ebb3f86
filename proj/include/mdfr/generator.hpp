#pragma once

#include <map>

#include "mdfr/bridge.hpp"
#include "mdfr/layers.hpp"

namespace mdfr::gen {

// Encoder/decoder widths. The restoration and frontalization nets share one
// architecture; widths are declared here rather than fixed in code so the
// test suite can run at reduced size.
struct GeneratorConfig {
  int image_size = 128;
  int base_channels = 64;
  int bottleneck_channels = 512;
  int heatmap_channels = 18;
  double leaky_slope = 0.2;

  static constexpr int kEncoderBlocks = 5;
  static constexpr int kDecoderBlocks = 5;

  std::array<int, 5> encoder_channels() const {
    return {base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels,
            bottleneck_channels};
  }
  std::array<int, 5> decoder_channels() const {
    // The final block is wider so the full-resolution RGB convolution can
    // resolve sub-block detail from the nearest-upsampled feature map.
    return {2 * base_channels, base_channels, base_channels, base_channels, 2 * base_channels};
  }
  int bottleneck_spatial() const { return image_size / 32; }
  // Width of the decoder entry: image code plus pose-residual channels.
  int decoder_entry_channels() const { return 2 * bottleneck_channels; }
  // Channel count of the concatenated input of decoder block k (1-based).
  int decoder_input_channels(int block) const;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static GeneratorConfig from_kv(const std::map<std::string, std::string>& kv);
};

enum class Role { kFRN, kFFN };
std::string role_name(Role role);
Role role_from_name(const std::string& name);

// Feature maps with provenance, the unit of feature-level supervision.
struct FeatureTensor {
  nn::Tensor values;
  int block_index = -1;
  std::string network_role;
};

// One generator agent: encoder (image stem, heatmap stem, shared trunk) and
// densely connected decoder. Both roles own identical parameter shapes; the
// restoration net simply never runs the heatmap stem.
class Generator {
 public:
  Generator(Role role, const GeneratorConfig& cfg, std::uint64_t init_seed);

  Role role() const { return role_; }
  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::uint64_t weight_hash() const { return params_.hash(); }

  void save(const std::string& path) const;
  static Generator from_checkpoint(const std::string& path);

  // ---- graph API (batched NCHW) ----
  nn::VarPtr encode_image_var(const nn::VarPtr& img) const;
  nn::VarPtr encode_heatmap_var(const nn::VarPtr& hm) const;
  nn::VarPtr pose_residual_var(const nn::VarPtr& lp, const nn::VarPtr& lt) const;

  struct Decoded {
    nn::VarPtr image;          // (N,3,S,S), values in (0,1)
    nn::VarPtr last_features;  // final block output, pre-RGB
    std::vector<nn::VarPtr> block_inputs; // populated when traced
  };
  // `code` may be bottleneck-wide (zero-padded internally) or entry-wide.
  // `zero_block` (1-based) zeroes that block's output, for wiring probes.
  Decoded decode_var(const nn::VarPtr& code, bool trace = false, int zero_block = -1) const;
  Decoded restore_var(const nn::VarPtr& img) const;
  Decoded frontalize_var(const nn::VarPtr& img, const nn::VarPtr& lp,
                         const nn::VarPtr& lt) const;

  // ---- plain API ----
  FeatureTensor encode(const FaceImage& img) const;
  FeatureTensor encode_pose(const geometry::HeatmapStack& hm) const;
  FeatureTensor pose_residual(const geometry::HeatmapStack& lp,
                              const geometry::HeatmapStack& lt) const;
  FaceImage decode(const FeatureTensor& code) const;
  FaceImage restore(const FaceImage& img) const;
  FaceImage frontalize(const FaceImage& img, const geometry::HeatmapStack& lp,
                       const geometry::HeatmapStack& lt) const;
  FeatureTensor last_block_features(const FaceImage& img) const; // restoration path
  FeatureTensor last_block_features(const FaceImage& img, const geometry::HeatmapStack& lp,
                                    const geometry::HeatmapStack& lt) const;

 private:
  void check_image(const nn::Tensor& t) const;
  void check_heatmap(const nn::Tensor& t) const;

  Role role_;
  GeneratorConfig cfg_;
  nn::ParamStore params_;
  nn::Conv2dLayer image_stem_, heatmap_stem_;
  std::vector<nn::Conv2dLayer> trunk_;   // encoder blocks 2..5
  std::vector<nn::Conv2dLayer> decoder_; // decoder blocks 1..5
  nn::Conv2dLayer rgb_;
};

} // namespace mdfr::gen
