// Command-line front door: corpus building, three-phase training, inference,
// degradation and evaluation, all reproducible from seeds.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <memory>

#include <CLI11.hpp>

#include "mdfr/report.hpp"

namespace fs = std::filesystem;
using namespace mdfr;

namespace {

std::string default_run_dir() {
  const char* env = std::getenv("MDFR_RUN_DIR");
  return env ? env : "run";
}

harness::RunConfig load_run_config(const std::string& config_path) {
  if (config_path.empty()) return harness::RunConfig();
  return harness::validate_config(config_path);
}

critics::Embedder load_embedder(const std::string& path) {
  auto embedder = critics::Embedder::from_checkpoint(path);
  embedder.freeze();
  return embedder;
}

std::string embedder_ckpt_path(const std::string& run_dir) {
  return (fs::path(run_dir) / "embedder" / "final" / "embedder.ckpt").string();
}

int cmd_data_build(const harness::RunConfig& cfg) {
  data::CorpusOptions opts;
  opts.n_identities = cfg.data.n_identities;
  opts.yaw_degrees = cfg.data.poses;
  opts.seed = cfg.data.seed;
  opts.out_dir = cfg.corpus_dir;
  opts.basis_seed = cfg.basis_seed;
  opts.image_size = cfg.image_size;
  opts.blur_sigma_scale = cfg.data.blur_sigma_scale;
  const auto manifest = data::build_corpus(opts);
  std::cout << "built corpus: " << manifest.records.size() << " records under " << opts.out_dir
            << "\n";
  return 0;
}

int cmd_train_embedder(const harness::RunConfig& cfg) {
  const auto manifest = data::load_manifest((fs::path(cfg.corpus_dir) / "manifest.txt").string());
  std::vector<FaceImage> images;
  std::vector<int> labels;
  for (const auto& rec : manifest.records) {
    images.push_back(load_png((fs::path(cfg.corpus_dir) / rec.hq_path).string()));
    labels.push_back(rec.identity_id);
    images.push_back(load_png((fs::path(cfg.corpus_dir) / rec.frontal_path).string()));
    labels.push_back(rec.identity_id);
  }
  critics::EmbedderConfig ecfg;
  ecfg.image_size = cfg.image_size;
  ecfg.base_channels = cfg.embedder.base_channels;
  ecfg.embed_dim = cfg.embedder.embed_dim;
  critics::EmbedderTrainOptions topts;
  topts.steps = cfg.embedder.steps;
  topts.batch_size = cfg.embedder.batch_size;
  topts.lr = cfg.embedder.lr;
  topts.seed = cfg.embedder.seed;
  auto trained = critics::train_toy_embedder(images, labels, ecfg, topts);
  const double acc = critics::classification_accuracy(trained.embedder, images, labels);
  const std::string out = embedder_ckpt_path(cfg.run_dir);
  fs::create_directories(fs::path(out).parent_path());
  trained.embedder.save(out);
  std::cout << "embedder trained: final loss " << format_double(trained.final_loss)
            << ", train accuracy " << format_double(acc) << ", saved to " << out << "\n";
  return 0;
}

int cmd_train_phase(const harness::RunConfig& cfg, const std::string& phase,
                    const std::string& embedder_path, const std::string& frn_path,
                    const std::string& ffn_path) {
  const auto manifest = data::load_manifest((fs::path(cfg.corpus_dir) / "manifest.txt").string());
  const auto embedder =
      load_embedder(embedder_path.empty() ? embedder_ckpt_path(cfg.run_dir) : embedder_path);
  gen::GeneratorConfig gcfg = cfg.generator;
  gcfg.image_size = cfg.image_size;

  if (phase == "frn-s") {
    auto samples = training::restoration_samples(manifest, cfg.corpus_dir);
    training::TrainingLog log((fs::path(cfg.run_dir) / "frn-s" / "train.log").string());
    auto frn = training::train_frn_s(cfg.frn_s, samples, embedder, gcfg, cfg.run_dir, &log);
    std::cout << "frn-s finished: " << cfg.frn_s.max_steps << " steps, final total "
              << (log.entries().empty() ? 0.0 : log.entries().back().total) << "\n";
    return 0;
  }
  if (phase == "ffn-s") {
    auto samples = training::frontalization_samples(manifest, cfg.corpus_dir);
    training::TrainingLog log((fs::path(cfg.run_dir) / "ffn-s" / "train.log").string());
    auto result = training::train_ffn_s(cfg.ffn_s, samples, embedder, gcfg,
                                        cfg.critic_base_channels, cfg.run_dir, &log);
    std::cout << "ffn-s finished: " << cfg.ffn_s.max_steps << " steps\n";
    return 0;
  }
  if (phase == "frn-ti") {
    auto samples = training::ti_samples(manifest, cfg.corpus_dir);
    const auto basis =
        geometry::load_basis((fs::path(cfg.corpus_dir) / "basis.bin").string());
    const std::string frn_ckpt =
        frn_path.empty() ? (fs::path(cfg.run_dir) / "frn-s" / "final" / "frn.ckpt").string()
                         : frn_path;
    const std::string ffn_ckpt =
        ffn_path.empty() ? (fs::path(cfg.run_dir) / "ffn-s" / "final" / "ffn.ckpt").string()
                         : ffn_path;
    auto frn = gen::Generator::from_checkpoint(frn_ckpt);
    auto ffn = gen::Generator::from_checkpoint(ffn_ckpt);
    ffn.params().set_requires_grad(false);
    training::TrainingLog log((fs::path(cfg.run_dir) / "frn-ti" / "train.log").string());
    auto frn_ti = training::train_frn_ti(cfg.frn_ti, samples, basis, std::move(frn), ffn,
                                         embedder, cfg.run_dir, &log);
    std::cout << "frn-ti finished: " << cfg.frn_ti.max_steps << " steps\n";
    return 0;
  }
  std::cerr << "unknown phase: " << phase << "\n";
  return 1;
}

int cmd_eval_pair(const std::string& metric, const std::string& a_path,
                  const std::string& b_path) {
  const FaceImage a = load_png(a_path);
  const FaceImage b = load_png(b_path);
  if (metric == "psnr") {
    const double v = eval::psnr(a, b);
    if (std::isinf(v)) std::cout << "inf\n";
    else std::cout << format_double(v) << "\n";
    return 0;
  }
  if (metric == "ssim") {
    std::cout << format_double(eval::ssim(a, b)) << "\n";
    return 0;
  }
  std::cerr << "unknown metric: " << metric << "\n";
  return 1;
}

int cmd_eval_corpus(const harness::RunConfig& cfg, const std::string& embedder_path,
                    const std::string& frn_ti_path) {
  const auto manifest = data::load_manifest((fs::path(cfg.corpus_dir) / "manifest.txt").string());
  const auto embedder =
      load_embedder(embedder_path.empty() ? embedder_ckpt_path(cfg.run_dir) : embedder_path);
  std::unique_ptr<gen::Generator> frn_ti;
  const std::string ckpt =
      frn_ti_path.empty() ? (fs::path(cfg.run_dir) / "frn-ti" / "final" / "frn.ckpt").string()
                          : frn_ti_path;
  if (fs::exists(ckpt))
    frn_ti = std::make_unique<gen::Generator>(gen::Generator::from_checkpoint(ckpt));
  const auto artifacts = harness::run_corpus_eval(cfg, manifest, embedder, frn_ti.get());
  if (!artifacts.metrics_csv_path.empty())
    std::cout << "wrote " << artifacts.metrics_csv_path << "\n";
  if (!artifacts.recognition_txt_path.empty())
    std::cout << "wrote " << artifacts.recognition_txt_path << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint face restoration and frontalization pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "run configuration (JSON)");

  // data build
  auto* data_cmd = app.add_subcommand("data", "corpus operations");
  data_cmd->require_subcommand(1);
  auto* build_cmd = data_cmd->add_subcommand("build", "render the toy corpus");
  std::string build_out;
  int build_identities = -1;
  std::int64_t build_seed = -1;
  std::string build_poses;
  build_cmd->add_option("--out", build_out, "corpus output directory");
  build_cmd->add_option("--identities", build_identities, "number of identities");
  build_cmd->add_option("--seed", build_seed, "corpus seed");
  build_cmd->add_option("--poses", build_poses, "comma-separated yaw degrees");

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "apply a sampled degradation");
  std::uint64_t degrade_seed = 0;
  std::string degrade_in, degrade_out;
  double degrade_blur_scale = 1.0;
  degrade_cmd->add_option("--seed", degrade_seed, "spec sampling seed")->required();
  degrade_cmd->add_option("--blur-sigma-scale", degrade_blur_scale, "kernel sigma override");
  degrade_cmd->add_option("input", degrade_in, "input PNG")->required();
  degrade_cmd->add_option("output", degrade_out, "output PNG")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "run one training phase");
  train_cmd->require_subcommand(1);
  std::string train_corpus, train_run = default_run_dir();
  std::string train_embedder_path, train_frn_path, train_ffn_path;
  int train_steps = -1;
  std::int64_t train_seed = -1;
  for (const char* phase : {"embedder", "frn-s", "ffn-s", "frn-ti"}) {
    auto* sub = train_cmd->add_subcommand(phase);
    sub->add_option("--corpus", train_corpus, "corpus directory");
    sub->add_option("--run", train_run, "run directory");
    sub->add_option("--steps", train_steps, "override max steps");
    sub->add_option("--seed", train_seed, "override phase seed");
    sub->add_option("--embedder", train_embedder_path, "embedder checkpoint");
    if (std::string(phase) == "frn-ti") {
      sub->add_option("--frn", train_frn_path, "initial restoration checkpoint");
      sub->add_option("--ffn", train_ffn_path, "frozen frontalization checkpoint");
    }
  }

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "single-image inference");
  infer_cmd->require_subcommand(1);
  std::string infer_ckpt, infer_in, infer_out, infer_lp, infer_lt;
  bool with_landmarks = false;
  double infer_sigma = 2.0;
  auto* restore_cmd = infer_cmd->add_subcommand("restore", "restore a degraded image");
  restore_cmd->add_option("--ckpt", infer_ckpt, "restoration checkpoint")->required();
  restore_cmd->add_option("input", infer_in)->required();
  restore_cmd->add_option("output", infer_out)->required();
  auto* frontal_cmd =
      infer_cmd->add_subcommand("frontalize", "frontalize from a single image");
  frontal_cmd->add_option("--ckpt", infer_ckpt, "checkpoint")->required();
  frontal_cmd->add_flag("--with-landmarks", with_landmarks,
                        "use the landmark-conditioned net (needs --lp/--lt)");
  frontal_cmd->add_option("--lp", infer_lp, "profile landmark table");
  frontal_cmd->add_option("--lt", infer_lt, "target landmark table");
  frontal_cmd->add_option("--sigma", infer_sigma, "heatmap sigma");
  frontal_cmd->add_option("input", infer_in)->required();
  frontal_cmd->add_option("output", infer_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "metrics on image pairs or the corpus");
  std::string eval_metric, eval_corpus_dir, eval_run = default_run_dir();
  std::string eval_embedder_path, eval_frn_ti_path;
  std::vector<std::string> eval_paths;
  eval_cmd->add_option("--metric", eval_metric, "psnr or ssim (pair mode)");
  eval_cmd->add_option("--corpus", eval_corpus_dir, "corpus directory (corpus mode)");
  eval_cmd->add_option("--run", eval_run, "run directory");
  eval_cmd->add_option("--embedder", eval_embedder_path, "embedder checkpoint");
  eval_cmd->add_option("--frn-ti", eval_frn_ti_path, "restoration checkpoint");
  eval_cmd->add_option("paths", eval_paths, "two PNG paths in pair mode");

  // report
  auto* report_cmd = app.add_subcommand("report", "summarise a run directory");
  std::string report_run, report_corpus;
  int report_rows = 8;
  report_cmd->add_option("run_dir", report_run, "run directory")->required();
  report_cmd->add_option("--corpus", report_corpus, "corpus directory");
  report_cmd->add_option("--rows", report_rows, "contact sheet rows");

  // config
  auto* config_cmd = app.add_subcommand("config", "configuration utilities");
  config_cmd->require_subcommand(1);
  auto* validate_cmd = config_cmd->add_subcommand("validate", "validate a config file");
  std::string validate_path;
  validate_cmd->add_option("path", validate_path)->required();
  auto* dump_cmd = config_cmd->add_subcommand("defaults", "print the default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_cmd->parsed()) {
      harness::RunConfig cfg = load_run_config(config_path);
      if (!build_out.empty()) cfg.corpus_dir = build_out;
      if (build_identities > 0) cfg.data.n_identities = build_identities;
      if (build_seed >= 0) cfg.data.seed = static_cast<std::uint64_t>(build_seed);
      if (!build_poses.empty()) {
        cfg.data.poses.clear();
        std::istringstream is(build_poses);
        std::string tok;
        while (std::getline(is, tok, ',')) cfg.data.poses.push_back(std::stod(tok));
      }
      cfg.validate();
      return cmd_data_build(cfg);
    }
    if (degrade_cmd->parsed()) {
      const FaceImage in = load_png(degrade_in);
      const auto spec = degradation::sample_spec(degrade_seed);
      degradation::DegradeOptions opts;
      opts.blur_sigma_scale = degrade_blur_scale;
      save_png(degradation::degrade(in, spec, opts), degrade_out);
      std::cout << spec.to_text() << "\n";
      return 0;
    }
    if (train_cmd->parsed()) {
      harness::RunConfig cfg = load_run_config(config_path);
      if (!train_corpus.empty()) cfg.corpus_dir = train_corpus;
      cfg.run_dir = train_run;
      const std::string phase = train_cmd->get_subcommands().front()->get_name();
      if (train_steps >= 0) {
        cfg.frn_s.max_steps = cfg.ffn_s.max_steps = cfg.frn_ti.max_steps = train_steps;
        cfg.embedder.steps = train_steps;
      }
      if (train_seed >= 0) {
        const auto s = static_cast<std::uint64_t>(train_seed);
        cfg.frn_s.seed = cfg.ffn_s.seed = cfg.frn_ti.seed = s;
        cfg.embedder.seed = s;
      }
      cfg.validate();
      if (phase == "embedder") return cmd_train_embedder(cfg);
      return cmd_train_phase(cfg, phase, train_embedder_path, train_frn_path, train_ffn_path);
    }
    if (restore_cmd->parsed()) {
      const auto net = gen::Generator::from_checkpoint(infer_ckpt);
      save_png(net.restore(load_png(infer_in)), infer_out);
      return 0;
    }
    if (frontal_cmd->parsed()) {
      const auto net = gen::Generator::from_checkpoint(infer_ckpt);
      const FaceImage in = load_png(infer_in);
      if (with_landmarks) {
        if (infer_lp.empty() || infer_lt.empty())
          throw InvalidArgumentError("--with-landmarks needs --lp and --lt tables");
        const auto lp = geometry::load_landmarks(infer_lp);
        const auto lt = geometry::load_landmarks(infer_lt);
        const auto hm_lp = geometry::encode_heatmaps(lp, in.height, in.width, infer_sigma);
        const auto hm_lt = geometry::encode_heatmaps(lt, in.height, in.width, infer_sigma);
        save_png(net.frontalize(in, hm_lp, hm_lt), infer_out);
      } else {
        // Task-integrated net: a single degraded image, no pose priors.
        save_png(net.restore(in), infer_out);
      }
      return 0;
    }
    if (eval_cmd->parsed()) {
      if (!eval_metric.empty()) {
        if (eval_paths.size() != 2)
          throw InvalidArgumentError("pair mode needs exactly two PNG paths");
        return cmd_eval_pair(eval_metric, eval_paths[0], eval_paths[1]);
      }
      harness::RunConfig cfg = load_run_config(config_path);
      if (!eval_corpus_dir.empty()) cfg.corpus_dir = eval_corpus_dir;
      cfg.run_dir = eval_run;
      cfg.validate();
      return cmd_eval_corpus(cfg, eval_embedder_path, eval_frn_ti_path);
    }
    if (report_cmd->parsed()) {
      const auto result = harness::make_report(report_run, report_corpus, report_rows);
      std::cout << result.text;
      return 0;
    }
    if (validate_cmd->parsed()) {
      const auto cfg = harness::validate_config(validate_path);
      std::cout << "config ok: " << validate_path << "\n";
      (void)cfg;
      return 0;
    }
    if (dump_cmd->parsed()) {
      std::cout << harness::RunConfig().to_json_text();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "no subcommand executed\n";
  return 1;
}
