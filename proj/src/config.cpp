#include "mdfr/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mdfr::harness {

using nlohmann::json;

RunConfig::RunConfig() {
  frn_s.phase = "frn-s";
  frn_s.max_steps = 2000;
  ffn_s.phase = "ffn-s";
  ffn_s.max_steps = 4000;
  frn_ti.phase = "frn-ti";
  frn_ti.max_steps = 2000;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("config error at '" + key + "': " + why);
  };
  if (corpus_dir.empty()) fail("corpus_dir", "must not be empty");
  if (run_dir.empty()) fail("run_dir", "must not be empty");
  if (image_size < 32 || image_size % 32 != 0)
    fail("image_size", "must be a positive multiple of 32");
  if (!(heatmap_sigma > 0.0)) fail("heatmap_sigma", "must be positive");
  if (critic_base_channels < 1) fail("critic_base_channels", "must be positive");
  try {
    generator.validate();
  } catch (const std::exception& e) {
    fail("generator", e.what());
  }
  if (data.n_identities < 1) fail("data.n_identities", "must be positive");
  if (data.poses.empty()) fail("data.poses", "must name at least one pose");
  if (!(data.blur_sigma_scale > 0.0)) fail("data.blur_sigma_scale", "must be positive");
  if (embedder.base_channels < 1) fail("embedder.base_channels", "must be positive");
  if (embedder.embed_dim < 1) fail("embedder.embed_dim", "must be positive");
  if (embedder.steps < 0) fail("embedder.steps", "must be non-negative");
  if (embedder.batch_size < 1) fail("embedder.batch_size", "must be positive");
  if (!(embedder.lr > 0.0)) fail("embedder.lr", "must be positive");
  const struct {
    const char* key;
    const training::PhaseConfig& cfg;
  } phases[] = {{"phases.frn-s", frn_s}, {"phases.ffn-s", ffn_s}, {"phases.frn-ti", frn_ti}};
  for (const auto& p : phases) {
    try {
      p.cfg.validate();
    } catch (const std::exception& e) {
      fail(p.key, e.what());
    }
  }
  if (eval_protocol != "fidelity" && eval_protocol != "recognition" && eval_protocol != "all")
    fail("eval_protocol", "must be fidelity, recognition or all");
}

namespace {

json phase_to_json(const training::PhaseConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"lr_frn", cfg.lr_frn},
              {"lr_ffn", cfg.lr_ffn},
              {"lr_pcd", cfg.lr_pcd},
              {"lr_icd", cfg.lr_icd},
              {"lambda1", cfg.weights.lambda1},
              {"lambda2", cfg.weights.lambda2},
              {"lambda3", cfg.weights.lambda3},
              {"lambda4", cfg.weights.lambda4},
              {"lambda5", cfg.weights.lambda5},
              {"max_steps", cfg.max_steps},
              {"seed", cfg.seed},
              {"checkpoint_interval", cfg.checkpoint_interval},
              {"grad_clip", cfg.grad_clip},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"non_saturating_g", cfg.non_saturating_g},
              {"heatmap_sigma", cfg.heatmap_sigma}};
}

// Reads `key` from `node` into `out` when present, requiring the exact type.
template <class T>
void read_field(const json& node, const std::string& path, const char* key, T& out) {
  if (!node.contains(key)) return;
  try {
    out = node.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config error at '" + path + "." + key + "': " + e.what());
  }
}

void phase_from_json(const json& node, const std::string& path, training::PhaseConfig& cfg) {
  read_field(node, path, "batch_size", cfg.batch_size);
  read_field(node, path, "lr_frn", cfg.lr_frn);
  read_field(node, path, "lr_ffn", cfg.lr_ffn);
  read_field(node, path, "lr_pcd", cfg.lr_pcd);
  read_field(node, path, "lr_icd", cfg.lr_icd);
  read_field(node, path, "lambda1", cfg.weights.lambda1);
  read_field(node, path, "lambda2", cfg.weights.lambda2);
  read_field(node, path, "lambda3", cfg.weights.lambda3);
  read_field(node, path, "lambda4", cfg.weights.lambda4);
  read_field(node, path, "lambda5", cfg.weights.lambda5);
  read_field(node, path, "max_steps", cfg.max_steps);
  read_field(node, path, "seed", cfg.seed);
  read_field(node, path, "checkpoint_interval", cfg.checkpoint_interval);
  read_field(node, path, "grad_clip", cfg.grad_clip);
  read_field(node, path, "adam_beta1", cfg.adam_beta1);
  read_field(node, path, "adam_beta2", cfg.adam_beta2);
  read_field(node, path, "non_saturating_g", cfg.non_saturating_g);
  read_field(node, path, "heatmap_sigma", cfg.heatmap_sigma);
}

} // namespace

std::string RunConfig::to_json_text() const {
  json j;
  j["corpus_dir"] = corpus_dir;
  j["run_dir"] = run_dir;
  j["basis_seed"] = basis_seed;
  j["image_size"] = image_size;
  j["heatmap_sigma"] = heatmap_sigma;
  j["critic_base_channels"] = critic_base_channels;
  j["generator"] = {{"base_channels", generator.base_channels},
                    {"bottleneck_channels", generator.bottleneck_channels},
                    {"leaky_slope", generator.leaky_slope}};
  j["data"] = {{"n_identities", data.n_identities},
               {"poses", data.poses},
               {"seed", data.seed},
               {"blur_sigma_scale", data.blur_sigma_scale}};
  j["embedder"] = {{"base_channels", embedder.base_channels},
                   {"embed_dim", embedder.embed_dim},
                   {"steps", embedder.steps},
                   {"batch_size", embedder.batch_size},
                   {"lr", embedder.lr},
                   {"seed", embedder.seed}};
  j["phases"] = {{"frn-s", phase_to_json(frn_s)},
                 {"ffn-s", phase_to_json(ffn_s)},
                 {"frn-ti", phase_to_json(frn_ti)}};
  j["eval_protocol"] = eval_protocol;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  read_field(j, "", "corpus_dir", cfg.corpus_dir);
  read_field(j, "", "run_dir", cfg.run_dir);
  read_field(j, "", "basis_seed", cfg.basis_seed);
  read_field(j, "", "image_size", cfg.image_size);
  read_field(j, "", "heatmap_sigma", cfg.heatmap_sigma);
  read_field(j, "", "critic_base_channels", cfg.critic_base_channels);
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    read_field(g, "generator", "base_channels", cfg.generator.base_channels);
    read_field(g, "generator", "bottleneck_channels", cfg.generator.bottleneck_channels);
    read_field(g, "generator", "leaky_slope", cfg.generator.leaky_slope);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    read_field(d, "data", "n_identities", cfg.data.n_identities);
    read_field(d, "data", "poses", cfg.data.poses);
    read_field(d, "data", "seed", cfg.data.seed);
    read_field(d, "data", "blur_sigma_scale", cfg.data.blur_sigma_scale);
  }
  if (j.contains("embedder")) {
    const auto& e = j.at("embedder");
    read_field(e, "embedder", "base_channels", cfg.embedder.base_channels);
    read_field(e, "embedder", "embed_dim", cfg.embedder.embed_dim);
    read_field(e, "embedder", "steps", cfg.embedder.steps);
    read_field(e, "embedder", "batch_size", cfg.embedder.batch_size);
    read_field(e, "embedder", "lr", cfg.embedder.lr);
    read_field(e, "embedder", "seed", cfg.embedder.seed);
  }
  if (j.contains("phases")) {
    const auto& p = j.at("phases");
    if (p.contains("frn-s")) phase_from_json(p.at("frn-s"), "phases.frn-s", cfg.frn_s);
    if (p.contains("ffn-s")) phase_from_json(p.at("ffn-s"), "phases.ffn-s", cfg.ffn_s);
    if (p.contains("frn-ti")) phase_from_json(p.at("frn-ti"), "phases.frn-ti", cfg.frn_ti);
  }
  read_field(j, "", "eval_protocol", cfg.eval_protocol);
  cfg.generator.image_size = cfg.image_size;
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open config for writing: " + path);
  os << to_json_text();
}

bool RunConfig::operator==(const RunConfig& other) const {
  return to_json_text() == other.to_json_text();
}

RunConfig validate_config(const std::string& path) {
  RunConfig cfg = RunConfig::load(path);
  cfg.validate();
  return cfg;
}

} // namespace mdfr::harness
