#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdfr/generator.hpp"
#include "test_helpers.hpp"

using namespace mdfr;
using namespace mdfr::testing;
using gen::Generator;
using gen::GeneratorConfig;
using gen::Role;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.image_size = 32; // bottleneck 1x1, cheap forward passes
  cfg.base_channels = 4;
  cfg.bottleneck_channels = 8;
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

TEST_CASE("encoder output shape and determinism") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 1);
  RandomStream rng(40);
  auto img = random_face(cfg.image_size, rng);

  auto code = frn.encode(img);
  CHECK(code.values.c() == cfg.bottleneck_channels);
  CHECK(code.values.h() == cfg.bottleneck_spatial());
  CHECK(code.values.w() == cfg.bottleneck_spatial());

  auto code2 = frn.encode(img);
  for (std::size_t i = 0; i < code.values.numel(); ++i)
    CHECK(code.values[i] == code2.values[i]);

  FaceImage wrong(16, 16);
  CHECK_THROWS_AS(frn.encode(wrong), ShapeError);
}

TEST_CASE("pose encoder: repeatability and bias response on zero heatmaps") {
  auto cfg = small_config();
  Generator ffn(Role::kFFN, cfg, 2);
  geometry::HeatmapStack zeros;
  zeros.height = zeros.width = cfg.image_size;
  zeros.sigma = 1.0;
  zeros.maps.assign(static_cast<std::size_t>(geometry::kNumKeypoints) * cfg.image_size *
                        cfg.image_size,
                    0.0);
  auto a = ffn.encode_pose(zeros);
  auto b = ffn.encode_pose(zeros);
  CHECK(a.values.numel() > 0);
  for (std::size_t i = 0; i < a.values.numel(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("pose residual: self-difference is exactly zero, antisymmetry is exact") {
  auto cfg = small_config();
  Generator ffn(Role::kFFN, cfg, 3);
  RandomStream rng(41);
  auto hm_a = random_heatmaps(cfg.image_size, rng);
  auto hm_b = random_heatmaps(cfg.image_size, rng);

  auto self_res = ffn.pose_residual(hm_a, hm_a);
  for (std::size_t i = 0; i < self_res.values.numel(); ++i) CHECK(self_res.values[i] == 0.0);

  auto ab = ffn.pose_residual(hm_a, hm_b);
  auto ba = ffn.pose_residual(hm_b, hm_a);
  for (std::size_t i = 0; i < ab.values.numel(); ++i) CHECK(ab.values[i] == -ba.values[i]);

  // Compositional oracle: residual equals two pose encodings subtracted.
  auto ea = ffn.encode_pose(hm_a);
  auto eb = ffn.encode_pose(hm_b);
  for (std::size_t i = 0; i < ab.values.numel(); ++i)
    CHECK(ab.values[i] == ea.values[i] - eb.values[i]);
}

TEST_CASE("decoder output contract and restore composition") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 4);
  RandomStream rng(42);
  auto img = random_face(cfg.image_size, rng);

  auto restored = frn.restore(img);
  CHECK(restored.height == cfg.image_size);
  CHECK(restored.width == cfg.image_size);
  for (double v : restored.pixels) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  // restore == decode(encode(img)) exactly.
  auto composed = frn.decode(frn.encode(img));
  CHECK(composed.pixels == restored.pixels);

  // Determinism.
  auto again = frn.restore(img);
  CHECK(again.pixels == restored.pixels);
}

TEST_CASE("frontalize equals the manual compose of encode, residual and decode") {
  auto cfg = small_config();
  Generator ffn(Role::kFFN, cfg, 5);
  RandomStream rng(43);
  auto img = random_face(cfg.image_size, rng);
  auto lp = random_heatmaps(cfg.image_size, rng);
  auto lt = random_heatmaps(cfg.image_size, rng);

  auto direct = ffn.frontalize(img, lp, lt);

  auto code = ffn.encode(img);
  auto residual = ffn.pose_residual(lp, lt);
  nn::Tensor joint(1, cfg.decoder_entry_channels(), cfg.bottleneck_spatial(),
                   cfg.bottleneck_spatial());
  std::copy(code.values.data(), code.values.data() + code.values.numel(), joint.data());
  std::copy(residual.values.data(), residual.values.data() + residual.values.numel(),
            joint.data() + code.values.numel());
  gen::FeatureTensor joint_ft{joint, 0, "FFN"};
  auto composed = ffn.decode(joint_ft);
  CHECK(composed.pixels == direct.pixels);
}

TEST_CASE("identical pose inputs leave the residual entry channels exactly zero") {
  auto cfg = small_config();
  Generator ffn(Role::kFFN, cfg, 6);
  RandomStream rng(44);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)));
  auto hm = nn::Variable::leaf(nn::to_tensor(random_heatmaps(cfg.image_size, rng)));

  auto code = ffn.encode_image_var(img);
  auto residual = ffn.pose_residual_var(hm, hm);
  auto entry = nn::concat_channels({code, residual});
  auto traced = ffn.decode_var(entry, true);
  REQUIRE(!traced.block_inputs.empty());
  const auto& d0 = traced.block_inputs[0]->value;
  const int cb = cfg.bottleneck_channels;
  for (int c = cb; c < 2 * cb; ++c)
    for (int y = 0; y < d0.h(); ++y)
      for (int x = 0; x < d0.w(); ++x) CHECK(d0.at(0, c, y, x) == 0.0);
}

TEST_CASE("restoration and frontalization nets are shape-congruent layer by layer") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 7);
  Generator ffn(Role::kFFN, cfg, 8);
  const auto& a = frn.params().entries();
  const auto& b = ffn.params().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->value.dims() == b[i].second->value.dims());
  }
}

TEST_CASE("dense wiring: every block input is the concat of all earlier outputs") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 9);
  RandomStream rng(45);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)));
  auto traced = frn.decode_var(frn.encode_image_var(img), true);
  REQUIRE(traced.block_inputs.size() == GeneratorConfig::kDecoderBlocks);

  const auto dec = cfg.decoder_channels();
  const int entry_c = cfg.decoder_entry_channels();

  // Input of block k is laid out newest-to-oldest: [d_{k-1}, ..., d_1, d_0].
  for (int k = 2; k <= GeneratorConfig::kDecoderBlocks; ++k) {
    const auto& input_k = traced.block_inputs[k - 1]->value;
    CHECK(input_k.c() == cfg.decoder_input_channels(k));

    // Oldest segment: the entry code upsampled to this block's resolution.
    const auto& d0 = traced.block_inputs[0]->value;
    const int res = input_k.h();
    const int f = res / d0.h();
    const int off = input_k.c() - entry_c;
    for (int c = 0; c < entry_c; ++c)
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
          CHECK(input_k.at(0, off + c, y, x) == d0.at(0, c, y / f, x / f));

    // The d_{k-2} slice of block k's input equals the d_{k-2} slice of block
    // k-1's input (where it is the newest segment), upsampled by 2.
    if (k >= 3) {
      const auto& input_prev = traced.block_inputs[k - 2]->value;
      const int prev_off = dec[k - 2]; // skip the d_{k-1} segment
      const int prev_w = dec[k - 3];   // width of d_{k-2}
      const int fp = res / input_prev.h();
      for (int c = 0; c < prev_w; ++c)
        for (int y = 0; y < res; ++y)
          for (int x = 0; x < res; ++x)
            CHECK(input_k.at(0, prev_off + c, y, x) == input_prev.at(0, c, y / fp, x / fp));
    }
  }
}

TEST_CASE("zeroing one block's output blanks exactly its reserved downstream channels") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 10);
  RandomStream rng(46);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)));
  auto code = frn.encode_image_var(img);
  auto normal = frn.decode_var(code, true);
  auto probed = frn.decode_var(code, true, 1); // zero the first block's output

  const auto dec = cfg.decoder_channels();
  const int entry_c = cfg.decoder_entry_channels();

  // Block 2's input: [d_1 | d_0]; the d_1 slice must be zero under the probe
  // while the d_0 slice is untouched.
  const auto& p2 = probed.block_inputs[1]->value;
  const auto& n2 = normal.block_inputs[1]->value;
  for (int c = 0; c < dec[0]; ++c)
    for (int y = 0; y < p2.h(); ++y)
      for (int x = 0; x < p2.w(); ++x) CHECK(p2.at(0, c, y, x) == 0.0);
  for (int c = dec[0]; c < dec[0] + entry_c; ++c)
    for (int y = 0; y < p2.h(); ++y)
      for (int x = 0; x < p2.w(); ++x) CHECK(p2.at(0, c, y, x) == n2.at(0, c, y, x));

  // Block 4's input: [d_3, d_2, d_1, d_0]; the d_1 slice is zero, the d_0
  // slice unchanged (d_2 and d_3 legitimately differ downstream).
  const auto& p4 = probed.block_inputs[3]->value;
  const auto& n4 = normal.block_inputs[3]->value;
  const int d1_off = dec[2] + dec[1];
  for (int c = d1_off; c < d1_off + dec[0]; ++c)
    for (int y = 0; y < p4.h(); ++y)
      for (int x = 0; x < p4.w(); ++x) CHECK(p4.at(0, c, y, x) == 0.0);
  const int d0_off = d1_off + dec[0];
  for (int c = d0_off; c < d0_off + entry_c; ++c)
    for (int y = 0; y < p4.h(); ++y)
      for (int x = 0; x < p4.w(); ++x) CHECK(p4.at(0, c, y, x) == n4.at(0, c, y, x));
}

TEST_CASE("last-block features share shape across roles and match the decoder tap") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 11);
  Generator ffn(Role::kFFN, cfg, 12);
  RandomStream rng(47);
  auto img = random_face(cfg.image_size, rng);
  auto lp = random_heatmaps(cfg.image_size, rng);
  auto lt = random_heatmaps(cfg.image_size, rng);

  auto f_frn = frn.last_block_features(img);
  auto f_ffn = ffn.last_block_features(img, lp, lt);
  CHECK(f_frn.values.dims() == f_ffn.values.dims());
  CHECK(f_frn.block_index == GeneratorConfig::kDecoderBlocks);
  CHECK(f_frn.network_role == "FRN");
  CHECK(f_ffn.network_role == "FFN");

  // The tap equals a manual re-run through the graph API.
  auto direct = frn.restore_var(nn::Variable::leaf(nn::to_tensor(img)));
  for (std::size_t i = 0; i < f_frn.values.numel(); ++i)
    CHECK(f_frn.values[i] == direct.last_features->value[i]);
}

TEST_CASE("finite differences through the whole generator at ten random weights") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 13);
  RandomStream rng(48);
  auto img = nn::Variable::leaf(nn::to_tensor(random_face(cfg.image_size, rng)));

  // Scalar probe: sum of output pixels.
  auto build = [&] { return nn::vsum(frn.restore_var(img).image); };
  auto weight = frn.params().get("dec.block3.weight");
  auto res1 = grad_check(weight, build, 5, rng, 1e-6);
  CHECK(res1.max_rel_err < 1e-3);
  auto stem = frn.params().get("enc.image_stem.weight");
  auto res2 = grad_check(stem, build, 5, rng, 1e-6);
  CHECK(res2.max_rel_err < 1e-3);
}

TEST_CASE("checkpoints restore role, config and weights") {
  auto cfg = small_config();
  Generator ffn(Role::kFFN, cfg, 14);
  const std::string path = "/tmp/mdfr_test_gen.ckpt";
  ffn.save(path);
  auto loaded = Generator::from_checkpoint(path);
  CHECK(loaded.role() == Role::kFFN);
  CHECK(loaded.config().base_channels == cfg.base_channels);
  CHECK(loaded.weight_hash() == ffn.weight_hash());
}

TEST_CASE("decode rejects code tensors of the wrong width") {
  auto cfg = small_config();
  Generator frn(Role::kFRN, cfg, 15);
  gen::FeatureTensor bad{nn::Tensor(1, 3, cfg.bottleneck_spatial(), cfg.bottleneck_spatial()), 0,
                         "FRN"};
  CHECK_THROWS_AS(frn.decode(bad), ShapeError);
}
