#pragma once

#include <map>
#include <optional>

#include "mdfr/generator.hpp"

namespace mdfr::critics {

using gen::FeatureTensor;

// VGG-11-style conditional critic: eight 3x3 conv layers with five
// max-pool downsamples, then a scalar real/fake head. Logits are clipped
// before the logistic so the adversarial logarithms stay finite.
struct CriticConfig {
  int image_size = 128;
  int base_channels = 64;
  int condition_channels = 18;
  double leaky_slope = 0.2;
  double logit_clip = 20.0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static CriticConfig from_kv(const std::map<std::string, std::string>& kv);
};

enum class CriticRole { kPCD, kICD };
std::string critic_role_name(CriticRole role);
CriticRole critic_role_from_name(const std::string& name);

class Critic {
 public:
  Critic(CriticRole role, const CriticConfig& cfg, std::uint64_t init_seed);

  CriticRole role() const { return role_; }
  const CriticConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::uint64_t weight_hash() const { return params_.hash(); }

  // Probability in (0,1) that (image, condition) is a real pair.
  // The condition is channel-concatenated with the image at input resolution.
  nn::VarPtr score_var(const nn::VarPtr& img, const nn::VarPtr& condition) const;
  double score(const FaceImage& img, const geometry::HeatmapStack& target_pose) const;
  double score(const FaceImage& img, const FeatureTensor& identity_map) const;

  void save(const std::string& path) const;
  static Critic from_checkpoint(const std::string& path);

 private:
  CriticRole role_;
  CriticConfig cfg_;
  nn::ParamStore params_;
  std::vector<nn::Conv2dLayer> convs_;
  std::vector<bool> pool_after_;
  nn::LinearLayer head_;
};

// Small convolutional identity encoder. Trained once as a classifier over the
// toy identities, then frozen; supplies both the identity embedding and the
// spatial feature map used to condition the ICD.
struct EmbedderConfig {
  int image_size = 128;
  int base_channels = 16;
  int embed_dim = 128;
  int num_classes = 0; // 0 = no classifier head
  double leaky_slope = 0.2;

  int feature_channels() const { return 8 * base_channels; }
  int feature_spatial() const { return image_size / 16; }
  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static EmbedderConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct IdentityEmbedding {
  std::vector<double> v;
};

class Embedder {
 public:
  Embedder(const EmbedderConfig& cfg, std::uint64_t init_seed);

  const EmbedderConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::uint64_t weight_hash() const { return params_.hash(); }
  void freeze() { params_.set_requires_grad(false); }

  nn::VarPtr embed_var(const nn::VarPtr& img) const;       // (N,embed_dim,1,1)
  nn::VarPtr feature_map_var(const nn::VarPtr& img) const; // last conv stage
  nn::VarPtr logits_var(const nn::VarPtr& img) const;      // requires classifier head

  IdentityEmbedding embed(const FaceImage& img) const;
  // Last conv stage resized to image resolution for critic conditioning.
  FeatureTensor identity_map(const FaceImage& img) const;
  int classify(const FaceImage& img) const; // argmax over classifier head

  void save(const std::string& path) const;
  static Embedder from_checkpoint(const std::string& path);

 private:
  EmbedderConfig cfg_;
  nn::ParamStore params_;
  std::vector<nn::Conv2dLayer> convs_;
  nn::LinearLayer embed_head_;
  std::optional<nn::LinearLayer> class_head_;
};

struct EmbedderTrainOptions {
  int steps = 800;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

// Softmax cross-entropy training over identity labels. Returns the trained
// embedder (not yet frozen) and the final-step loss.
struct EmbedderTrainResult {
  Embedder embedder;
  double final_loss = 0.0;
};
EmbedderTrainResult train_toy_embedder(const std::vector<FaceImage>& images,
                                       const std::vector<int>& labels,
                                       const EmbedderConfig& cfg,
                                       const EmbedderTrainOptions& opts);

double classification_accuracy(const Embedder& embedder, const std::vector<FaceImage>& images,
                               const std::vector<int>& labels);

} // namespace mdfr::critics
