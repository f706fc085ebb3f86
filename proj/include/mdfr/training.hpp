#pragma once

#include <optional>

#include "mdfr/critics.hpp"
#include "mdfr/data.hpp"
#include "mdfr/losses.hpp"
#include "mdfr/optim.hpp"

namespace mdfr::training {

// Hyperparameters of one training phase. Defaults are the implementation
// constants of the standard pipeline.
struct PhaseConfig {
  std::string phase;          // "frn-s" | "ffn-s" | "frn-ti"
  int batch_size = 8;
  double lr_frn = 1e-4;
  double lr_ffn = 1e-4;
  double lr_pcd = 1e-3;
  double lr_icd = 1e-3;
  losses::LossWeights weights;
  int max_steps = 0;
  std::uint64_t seed = 1;
  int checkpoint_interval = 0; // 0: write only the final checkpoint
  double grad_clip = 10.0;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  bool non_saturating_g = false;
  double heatmap_sigma = 2.0;
  // Optional early stop: finish once the named log component reaches the
  // threshold. Empty name disables it.
  std::string stop_component;
  double stop_threshold = 0.0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static PhaseConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct StepLogEntry {
  int step = 0;
  std::string phase;
  std::vector<std::pair<std::string, double>> components;
  double total = 0.0;
  bool clipped = false;

  double component(const std::string& name) const;
};

// Append-only plain-text training log; one record per step, no wall-clock
// content so identical runs produce identical logs.
class TrainingLog {
 public:
  explicit TrainingLog(const std::string& path = ""); // empty: in-memory only
  void append(const StepLogEntry& entry);
  const std::vector<StepLogEntry>& entries() const { return entries_; }

 private:
  std::string path_;
  std::vector<StepLogEntry> entries_;
};

struct RestorationSample {
  FaceImage low, high;
};
struct FrontalizationSample {
  FaceImage profile, target;
  geometry::LandmarkSet lp, lt;
};
struct TiSample {
  FaceImage low, high;
  geometry::LandmarkSet lp;
  geometry::RigidParams rigid;
  geometry::ShapeCoefficients coeffs;
};

std::vector<RestorationSample> restoration_samples(const data::Manifest& manifest,
                                                   const std::string& corpus_root);
std::vector<FrontalizationSample> frontalization_samples(const data::Manifest& manifest,
                                                         const std::string& corpus_root);
std::vector<TiSample> ti_samples(const data::Manifest& manifest,
                                 const std::string& corpus_root);

// Optimizer factory: adaptive-moment descent with the phase's decay pair.
nn::AdamOptimizer make_optimizer(nn::ParamStore& params, double lr, const PhaseConfig& cfg);

// Phase 1: restoration net on (low, high) pairs, identity embedder frozen.
gen::Generator train_frn_s(const PhaseConfig& cfg, const std::vector<RestorationSample>& samples,
                           const critics::Embedder& embedder, const gen::GeneratorConfig& gen_cfg,
                           const std::string& run_dir = "", TrainingLog* log = nullptr);

// Phase 2: frontalization net with alternating conditioned-critic updates.
struct FfnTrainResult {
  gen::Generator ffn;
  critics::Critic pcd;
  critics::Critic icd;
};
FfnTrainResult train_ffn_s(const PhaseConfig& cfg,
                           const std::vector<FrontalizationSample>& samples,
                           const critics::Embedder& embedder, const gen::GeneratorConfig& gen_cfg,
                           int critic_base_channels, const std::string& run_dir = "",
                           TrainingLog* log = nullptr);

// Task-integrated phase: the frozen frontalization net teaches the
// restoration net through pixel, identity and feature-alignment terms, with
// frontal landmarks supplied by pose normalisation from known rigid params.
gen::Generator train_frn_ti(const PhaseConfig& cfg, const std::vector<TiSample>& samples,
                            const geometry::MorphableBasis& basis, gen::Generator frn,
                            const gen::Generator& ffn_frozen, const critics::Embedder& embedder,
                            const std::string& run_dir = "", TrainingLog* log = nullptr);

bool is_frozen(const nn::ParamStore& params);

} // namespace mdfr::training
