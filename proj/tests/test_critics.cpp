#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mdfr/critics.hpp"
#include "mdfr/degradation.hpp"
#include "test_helpers.hpp"

using namespace mdfr;
using namespace mdfr::testing;
using critics::Critic;
using critics::CriticConfig;
using critics::CriticRole;
using critics::Embedder;
using critics::EmbedderConfig;

namespace {

CriticConfig small_critic_config(int condition_channels) {
  CriticConfig cfg;
  cfg.image_size = 32;
  cfg.base_channels = 2;
  cfg.condition_channels = condition_channels;
  return cfg;
}

EmbedderConfig small_embedder_config() {
  EmbedderConfig cfg;
  cfg.image_size = 32;
  cfg.base_channels = 4;
  cfg.embed_dim = 16;
  return cfg;
}

FaceImage random_face(int size, RandomStream& rng) {
  FaceImage img(size, size);
  for (auto& v : img.pixels) v = rng.uniform(0.0, 1.0);
  return img;
}

geometry::HeatmapStack random_heatmaps(int size, RandomStream& rng) {
  geometry::LandmarkSet lm;
  for (int k = 0; k < geometry::kNumKeypoints; ++k) {
    lm.points(k, 0) = rng.uniform(2.0, size - 2.0);
    lm.points(k, 1) = rng.uniform(2.0, size - 2.0);
  }
  return geometry::encode_heatmaps(lm, size, size, 1.5);
}

} // namespace

TEST_CASE("critic scores are strictly inside (0,1) and bounded by the logit clip") {
  auto cfg = small_critic_config(geometry::kNumKeypoints);
  Critic pcd(CriticRole::kPCD, cfg, 1);
  RandomStream rng(50);
  const double lo = 1.0 / (1.0 + std::exp(cfg.logit_clip));
  const double hi = 1.0 / (1.0 + std::exp(-cfg.logit_clip));
  for (int trial = 0; trial < 5; ++trial) {
    auto img = random_face(cfg.image_size, rng);
    auto hm = random_heatmaps(cfg.image_size, rng);
    const double s = pcd.score(img, hm);
    CHECK(s >= lo);
    CHECK(s <= hi);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("critic scoring is deterministic") {
  auto cfg = small_critic_config(geometry::kNumKeypoints);
  Critic pcd(CriticRole::kPCD, cfg, 2);
  RandomStream rng(51);
  auto img = random_face(cfg.image_size, rng);
  auto hm = random_heatmaps(cfg.image_size, rng);
  CHECK(pcd.score(img, hm) == pcd.score(img, hm));
}

TEST_CASE("the pose condition channels influence the score") {
  auto cfg = small_critic_config(geometry::kNumKeypoints);
  Critic pcd(CriticRole::kPCD, cfg, 3);
  RandomStream rng(52);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)));
  auto cond = nn::Variable::leaf(nn::to_tensor(random_heatmaps(cfg.image_size, rng)), true);

  auto score = pcd.score_var(img, cond);
  nn::backward(score);
  double grad_norm = 0.0;
  for (std::size_t i = 0; i < cond->grad.numel(); ++i)
    grad_norm += cond->grad[i] * cond->grad[i];
  CHECK(grad_norm > 0.0);

  // And two different conditions give different scores.
  auto other = nn::Variable::leaf(nn::to_tensor(random_heatmaps(cfg.image_size, rng)));
  CHECK(pcd.score_var(img, other)->value.item() != score->value.item());
}

TEST_CASE("role checks on the conditioned scoring surfaces") {
  auto pcd_cfg = small_critic_config(geometry::kNumKeypoints);
  Critic pcd(CriticRole::kPCD, pcd_cfg, 4);
  RandomStream rng(53);
  auto img = random_face(pcd_cfg.image_size, rng);
  gen::FeatureTensor fake_map{nn::Tensor(1, pcd_cfg.condition_channels, pcd_cfg.image_size,
                                         pcd_cfg.image_size),
                              4, "R_id"};
  CHECK_THROWS_AS(pcd.score(img, fake_map), InvalidArgumentError);
}

TEST_CASE("critic checkpoints round-trip") {
  auto cfg = small_critic_config(7);
  Critic icd(CriticRole::kICD, cfg, 5);
  const std::string path = "/tmp/mdfr_test_critic.ckpt";
  icd.save(path);
  auto loaded = Critic::from_checkpoint(path);
  CHECK(loaded.role() == CriticRole::kICD);
  CHECK(loaded.config().condition_channels == 7);
  CHECK(loaded.weight_hash() == icd.weight_hash());
}

TEST_CASE("embedder: identical inputs embed identically, zero input is finite") {
  auto cfg = small_embedder_config();
  Embedder embedder(cfg, 6);
  RandomStream rng(54);
  auto img = random_face(cfg.image_size, rng);
  auto a = embedder.embed(img);
  auto b = embedder.embed(img);
  CHECK(a.v == b.v);
  CHECK(static_cast<int>(a.v.size()) == cfg.embed_dim);

  FaceImage zero(cfg.image_size, cfg.image_size);
  auto e = embedder.embed(zero);
  for (double v : e.v) CHECK(std::isfinite(v));
}

TEST_CASE("identity map is deterministic, full-resolution, and matches a direct resample") {
  auto cfg = small_embedder_config();
  Embedder embedder(cfg, 7);
  RandomStream rng(55);
  auto img = random_face(cfg.image_size, rng);

  auto m1 = embedder.identity_map(img);
  auto m2 = embedder.identity_map(img);
  CHECK(m1.values.h() == cfg.image_size);
  CHECK(m1.values.w() == cfg.image_size);
  CHECK(m1.values.c() == cfg.feature_channels());
  for (std::size_t i = 0; i < m1.values.numel(); ++i) CHECK(m1.values[i] == m2.values[i]);

  // Independent Catmull-Rom resample of channel 0.
  auto fm = embedder.feature_map_var(nn::Variable::leaf(nn::to_tensor(img)));
  const auto& src = fm->value;
  auto cubic = [](double t) {
    const double a = -0.5;
    const double at = std::abs(t);
    if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
    if (at < 2.0) return ((a * at - 5.0 * a) * at + 8.0 * a) * at - 4.0 * a;
    return 0.0;
  };
  const int sh = src.h(), sw = src.w(), dh = cfg.image_size, dw = cfg.image_size;
  for (int oy = 0; oy < dh; oy += 7)
    for (int ox = 0; ox < dw; ox += 7) {
      const double fy = (oy + 0.5) * sh / static_cast<double>(dh) - 0.5;
      const double fx = (ox + 0.5) * sw / static_cast<double>(dw) - 0.5;
      const int iy = static_cast<int>(std::floor(fy));
      const int ix = static_cast<int>(std::floor(fx));
      double acc = 0.0;
      for (int ky = -1; ky <= 2; ++ky)
        for (int kx = -1; kx <= 2; ++kx) {
          const int yy = std::clamp(iy + ky, 0, sh - 1);
          const int xx = std::clamp(ix + kx, 0, sw - 1);
          acc += cubic(fy - (iy + ky)) * cubic(fx - (ix + kx)) * src.at(0, 0, yy, xx);
        }
      CHECK(m1.values.at(0, 0, oy, ox) == doctest::Approx(acc).epsilon(1e-9));
    }
}

TEST_CASE("embedder training separates a trivial two-class toy set") {
  auto cfg = small_embedder_config();
  std::vector<FaceImage> images;
  std::vector<int> labels;
  RandomStream rng(56);
  for (int i = 0; i < 24; ++i) {
    FaceImage img(cfg.image_size, cfg.image_size);
    const int label = i % 2;
    const double base = label == 0 ? 0.2 : 0.8;
    for (auto& v : img.pixels) v = std::clamp(base + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    images.push_back(img);
    labels.push_back(label);
  }
  critics::EmbedderTrainOptions opts;
  opts.steps = 60;
  opts.batch_size = 8;
  opts.lr = 3e-3;
  opts.seed = 9;
  auto result = critics::train_toy_embedder(images, labels, cfg, opts);
  CHECK(critics::classification_accuracy(result.embedder, images, labels) == 1.0);
  CHECK(result.embedder.config().num_classes == 2);
}

TEST_CASE("freezing the embedder keeps its weight hash fixed across training graphs") {
  auto cfg = small_embedder_config();
  Embedder embedder(cfg, 8);
  embedder.freeze();
  const auto hash_before = embedder.weight_hash();

  RandomStream rng(57);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)), true);
  auto emb = embedder.embed_var(img);
  auto loss = nn::vsum(nn::mul(emb, emb));
  nn::backward(loss);
  // Gradient flows to the image but not into the frozen weights.
  bool has_input_grad = false;
  for (std::size_t i = 0; i < img->grad.numel(); ++i)
    if (img->grad[i] != 0.0) has_input_grad = true;
  CHECK(has_input_grad);
  CHECK(embedder.weight_hash() == hash_before);
  for (const auto& [name, var] : embedder.params().entries()) CHECK(!var->requires_grad);
}

TEST_CASE("embedder checkpoints round-trip including the classifier head") {
  auto cfg = small_embedder_config();
  cfg.num_classes = 5;
  Embedder embedder(cfg, 9);
  const std::string path = "/tmp/mdfr_test_embedder.ckpt";
  embedder.save(path);
  auto loaded = Embedder::from_checkpoint(path);
  CHECK(loaded.config().num_classes == 5);
  CHECK(loaded.weight_hash() == embedder.weight_hash());
}
