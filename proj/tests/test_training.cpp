#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mdfr/training.hpp"
#include "test_helpers.hpp"

using namespace mdfr;
using namespace mdfr::training;

namespace {

constexpr int kSize = 32;

gen::GeneratorConfig tiny_gen_config() {
  gen::GeneratorConfig cfg;
  cfg.image_size = kSize;
  cfg.base_channels = 4;
  cfg.bottleneck_channels = 8;
  return cfg;
}

critics::EmbedderConfig tiny_embedder_config() {
  critics::EmbedderConfig cfg;
  cfg.image_size = kSize;
  cfg.base_channels = 4;
  cfg.embed_dim = 16;
  return cfg;
}

critics::Embedder frozen_embedder(std::uint64_t seed) {
  critics::Embedder e(tiny_embedder_config(), seed);
  e.freeze();
  return e;
}

// In-memory miniature corpus rendered at 32px: 2 identities x 2 poses.
struct TinyCorpus {
  geometry::MorphableBasis basis = geometry::make_toy_basis(77);
  std::vector<RestorationSample> restoration;
  std::vector<FrontalizationSample> frontalization;
  std::vector<TiSample> ti;
};

TinyCorpus tiny_corpus() {
  TinyCorpus corpus;
  const Eigen::Vector3d centre(64.0, 64.0, 0.0);
  for (int id = 0; id < 2; ++id) {
    const auto identity = data::make_toy_identity(derive_seed(321, id));
    for (double yaw_deg : {-40.0, 35.0}) {
      geometry::RigidParams rigid;
      rigid.scale = 0.2;
      rigid.rotation = geometry::rotation_from_euler(yaw_deg * M_PI / 180.0, 0.0, 0.0);
      const Eigen::Vector3d spun = rigid.rotation * centre;
      rigid.translation << 16.0 - rigid.scale * spun.x(), 16.0 - rigid.scale * spun.y();

      auto profile = data::render_face(corpus.basis, identity, rigid, 0.9, kSize);

      geometry::RigidParams frontal_rigid;
      frontal_rigid.scale = rigid.scale;
      frontal_rigid.rotation = Eigen::Matrix3d::Identity();
      frontal_rigid.translation.setZero();
      auto frontal = data::render_face(corpus.basis, identity, frontal_rigid, 0.9, kSize);

      auto spec = degradation::sample_spec(derive_seed(555, id * 10 + int(yaw_deg)));
      FaceImage low = degradation::degrade(profile.image, spec);

      corpus.restoration.push_back({low, profile.image});
      corpus.frontalization.push_back(
          {profile.image, frontal.image, profile.landmarks, frontal.landmarks});
      corpus.ti.push_back({low, profile.image, profile.landmarks, rigid, identity.coeffs});
    }
  }
  return corpus;
}

PhaseConfig phase(const std::string& name, int steps, std::uint64_t seed = 5) {
  PhaseConfig cfg;
  cfg.phase = name;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.seed = seed;
  cfg.lr_frn = 1e-3;
  cfg.lr_ffn = 1e-3;
  cfg.weights.lambda1 = 0.1;
  cfg.weights.lambda2 = 0.1;
  cfg.weights.lambda3 = 0.02;
  cfg.heatmap_sigma = 1.0;
  return cfg;
}

} // namespace

TEST_CASE("ti frontal landmarks from pose normalisation stay in frame") {
  auto corpus = tiny_corpus();
  for (const auto& s : corpus.ti) {
    const auto shape = geometry::assemble_shape(corpus.basis, s.coeffs);
    geometry::RigidParams rigid = s.rigid;
    auto lf = geometry::sample_keypoints(geometry::normalize_frontal(shape, rigid), corpus.basis);
    for (int k = 0; k < geometry::kNumKeypoints; ++k) {
      CHECK(lf.points(k, 0) >= 0.0);
      CHECK(lf.points(k, 0) < 32.0);
      CHECK(lf.points(k, 1) >= 0.0);
      CHECK(lf.points(k, 1) < 32.0);
    }
  }
}

TEST_CASE("zero-step phases leave every network untouched") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(1);
  auto cfg = tiny_gen_config();

  auto frn = train_frn_s(phase("frn-s", 0), corpus.restoration, embedder, cfg);
  gen::Generator fresh_frn(gen::Role::kFRN, cfg, phase("frn-s", 0).seed);
  CHECK(frn.weight_hash() == fresh_frn.weight_hash());

  auto ffn_result = train_ffn_s(phase("ffn-s", 0), corpus.frontalization, embedder, cfg, 2);
  gen::Generator fresh_ffn(gen::Role::kFFN, cfg, phase("ffn-s", 0).seed);
  CHECK(ffn_result.ffn.weight_hash() == fresh_ffn.weight_hash());

  gen::Generator frn_init(gen::Role::kFRN, cfg, 99);
  const auto init_hash = frn_init.weight_hash();
  gen::Generator teacher(gen::Role::kFFN, cfg, 98);
  teacher.params().set_requires_grad(false);
  auto frn_ti = train_frn_ti(phase("frn-ti", 0), corpus.ti, corpus.basis, std::move(frn_init),
                             teacher, embedder);
  CHECK(frn_ti.weight_hash() == init_hash);
}

TEST_CASE("identical seeds give bit-identical training outcomes") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(2);
  auto cfg = tiny_gen_config();

  TrainingLog log_a, log_b;
  auto a = train_frn_s(phase("frn-s", 5, 42), corpus.restoration, embedder, cfg, "", &log_a);
  auto b = train_frn_s(phase("frn-s", 5, 42), corpus.restoration, embedder, cfg, "", &log_b);
  CHECK(a.weight_hash() == b.weight_hash());
  REQUIRE(log_a.entries().size() == log_b.entries().size());
  for (std::size_t i = 0; i < log_a.entries().size(); ++i)
    CHECK(log_a.entries()[i].total == log_b.entries()[i].total);

  auto c = train_frn_s(phase("frn-s", 5, 43), corpus.restoration, embedder, cfg);
  CHECK(a.weight_hash() != c.weight_hash());
}

TEST_CASE("restoration training descends and logs both loss components") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(3);
  TrainingLog log;
  auto frn =
      train_frn_s(phase("frn-s", 120), corpus.restoration, embedder, tiny_gen_config(), "", &log);
  REQUIRE(log.entries().size() == 120);
  const auto& first = log.entries().front();
  const auto& last = log.entries().back();
  CHECK(last.total < first.total);
  CHECK(first.component("l_r") >= 0.0);
  CHECK(first.component("l_id") >= 0.0);

  // Moving-average smoke: the mean of the last 20 steps sits below the mean
  // of steps 10..30.
  auto window_mean = [&](int from, int to) {
    double acc = 0.0;
    for (int i = from; i < to; ++i) acc += log.entries()[i].total;
    return acc / (to - from);
  };
  CHECK(window_mean(100, 120) < window_mean(10, 30));
}

TEST_CASE("frontalization training moves both critics and keeps the embedder frozen") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(4);
  const auto embedder_hash = embedder.weight_hash();
  auto cfg = tiny_gen_config();

  gen::Generator fresh_ffn(gen::Role::kFFN, cfg, 5);
  critics::CriticConfig pcfg;
  pcfg.image_size = kSize;
  pcfg.base_channels = 2;
  pcfg.condition_channels = geometry::kNumKeypoints;
  critics::Critic fresh_pcd(critics::CriticRole::kPCD, pcfg, 5);

  TrainingLog log;
  auto result =
      train_ffn_s(phase("ffn-s", 60), corpus.frontalization, embedder, cfg, 2, "", &log);
  CHECK(embedder.weight_hash() == embedder_hash);
  CHECK(result.ffn.weight_hash() != fresh_ffn.weight_hash());
  CHECK(result.pcd.weight_hash() != fresh_pcd.weight_hash());
  REQUIRE(log.entries().size() == 60);

  // After training on the tiny set the critics separate real from fake.
  double real_mean = 0.0, fake_mean = 0.0;
  for (const auto& s : corpus.frontalization) {
    auto hm_lt = geometry::encode_heatmaps(s.lt, kSize, kSize, 1.0);
    auto hm_lp = geometry::encode_heatmaps(s.lp, kSize, kSize, 1.0);
    auto fake = result.ffn.frontalize(s.profile, hm_lp, hm_lt);
    real_mean += result.pcd.score(s.target, hm_lt);
    fake_mean += result.pcd.score(fake, hm_lt);
  }
  real_mean /= corpus.frontalization.size();
  fake_mean /= corpus.frontalization.size();
  CHECK(real_mean > fake_mean);

  // The frontalization pixel loss descended.
  CHECK(log.entries().back().component("l_f") < log.entries().front().component("l_f"));
}

TEST_CASE("task-integrated training freezes the teacher and distils the student") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(6);
  auto cfg = tiny_gen_config();

  auto frn = train_frn_s(phase("frn-s", 60), corpus.restoration, embedder, cfg);
  auto ffn_result = train_ffn_s(phase("ffn-s", 60), corpus.frontalization, embedder, cfg, 2);
  gen::Generator& ffn = ffn_result.ffn;
  ffn.params().set_requires_grad(false);
  const auto ffn_hash = ffn.weight_hash();
  const auto embedder_hash = embedder.weight_hash();

  // Teacher output for a fixed sample, before the phase.
  const auto& s0 = corpus.ti.front();
  const auto shape0 = geometry::assemble_shape(corpus.basis, s0.coeffs);
  auto lf0 =
      geometry::sample_keypoints(geometry::normalize_frontal(shape0, s0.rigid), corpus.basis);
  auto hm_lp0 = geometry::encode_heatmaps(s0.lp, kSize, kSize, 1.0);
  auto hm_lf0 = geometry::encode_heatmaps(lf0, kSize, kSize, 1.0);
  const auto teacher_before = ffn.frontalize(s0.high, hm_lp0, hm_lf0);

  TrainingLog log;
  auto cfg_ti = phase("frn-ti", 200);
  auto frn_ti = train_frn_ti(cfg_ti, corpus.ti, corpus.basis, std::move(frn), ffn, embedder, "",
                             &log);

  CHECK(ffn.weight_hash() == ffn_hash);
  CHECK(embedder.weight_hash() == embedder_hash);
  const auto teacher_after = ffn.frontalize(s0.high, hm_lp0, hm_lf0);
  CHECK(teacher_before.pixels == teacher_after.pixels);

  REQUIRE(log.entries().size() == 200);
  auto window_mean = [&](int from, int to) {
    double acc = 0.0;
    for (int i = from; i < to; ++i) acc += log.entries()[i].component("l_r");
    return acc / (to - from);
  };
  CHECK(window_mean(180, 200) < window_mean(0, 20));
  CHECK(log.entries().front().component("l_fa") >= 0.0);
}

TEST_CASE("an unfrozen teacher or embedder is rejected") {
  auto corpus = tiny_corpus();
  auto cfg = tiny_gen_config();
  critics::Embedder warm(tiny_embedder_config(), 7); // not frozen
  CHECK_THROWS_AS(train_frn_s(phase("frn-s", 1), corpus.restoration, warm, cfg),
                  InvalidArgumentError);

  auto embedder = frozen_embedder(8);
  gen::Generator frn(gen::Role::kFRN, cfg, 1);
  gen::Generator warm_ffn(gen::Role::kFFN, cfg, 2); // not frozen
  CHECK_THROWS_AS(train_frn_ti(phase("frn-ti", 1), corpus.ti, corpus.basis, std::move(frn),
                               warm_ffn, embedder),
                  InvalidArgumentError);
}

TEST_CASE("non-finite samples abort training with diagnostics") {
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(9);
  auto poisoned = corpus.restoration;
  poisoned[0].low.at(3, 3, 0) = std::nan("");
  CHECK_THROWS_AS(train_frn_s(phase("frn-s", 3), poisoned, embedder, tiny_gen_config()),
                  TrainingDiverged);
}

TEST_CASE("checkpoints land in the run directory layout") {
  namespace fs = std::filesystem;
  const std::string run_dir = "/tmp/mdfr_test_run";
  fs::remove_all(run_dir);
  auto corpus = tiny_corpus();
  auto embedder = frozen_embedder(10);
  auto cfg_p = phase("frn-s", 4);
  cfg_p.checkpoint_interval = 2;
  TrainingLog log((fs::path(run_dir) / "frn-s" / "train.log").string());
  auto frn = train_frn_s(cfg_p, corpus.restoration, embedder, tiny_gen_config(), run_dir, &log);
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "2" / "frn.ckpt"));
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "4" / "frn.ckpt"));
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "final" / "frn.ckpt"));
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "final" / "phase_config.txt"));
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "final" / "rng_state.txt"));
  CHECK(fs::exists(fs::path(run_dir) / "frn-s" / "train.log"));

  auto restored = gen::Generator::from_checkpoint(
      (fs::path(run_dir) / "frn-s" / "final" / "frn.ckpt").string());
  CHECK(restored.weight_hash() == frn.weight_hash());

  // Phase config snapshot round-trips.
  auto kv = cfg_p.to_kv();
  auto back = PhaseConfig::from_kv(kv);
  CHECK(back.to_kv() == kv);
}

TEST_CASE("optimizer factory honours the configured decay pair") {
  nn::ParamStore params;
  params.add("w", nn::Tensor::scalar(1.0));
  PhaseConfig cfg = phase("frn-s", 1);
  auto opt = make_optimizer(params, 0.01, cfg);
  CHECK(opt.lr() == 0.01);
}
