#pragma once

#include "mdfr/critics.hpp"
#include "mdfr/training.hpp"

namespace mdfr::harness {

struct DataConfig {
  int n_identities = 32;
  std::vector<double> poses = {0, 30, -30, 60, -60, 90, -90};
  std::uint64_t seed = 1;
  double blur_sigma_scale = 1.0;
};

struct EmbedderTrainConfig {
  int base_channels = 16;
  int embed_dim = 128;
  int steps = 800;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

// Front-door configuration tying every module into one reproducible run.
// Defaults are the standard pipeline constants.
struct RunConfig {
  std::string corpus_dir = "corpus";
  std::string run_dir = "run";
  std::uint64_t basis_seed = 2026;
  int image_size = 128;
  double heatmap_sigma = 2.0;
  int critic_base_channels = 64;
  gen::GeneratorConfig generator;
  DataConfig data;
  EmbedderTrainConfig embedder;
  training::PhaseConfig frn_s;
  training::PhaseConfig ffn_s;
  training::PhaseConfig frn_ti;
  std::string eval_protocol = "all"; // fidelity | recognition | all

  RunConfig();

  void validate() const; // throws ValidationError naming the offending key
  std::string to_json_text() const;
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const RunConfig& other) const;
};

// Loads, validates and returns the config; errors carry the key path.
RunConfig validate_config(const std::string& path);

} // namespace mdfr::harness
