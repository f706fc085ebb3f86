#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mdfr/geometry.hpp"

using namespace mdfr;
using namespace mdfr::geometry;

namespace {

// Small hand-built basis (minimum legal vertex count) for oracle tests.
MorphableBasis tiny_basis(std::uint64_t seed, int n = 20) {
  RandomStream rng(seed);
  MorphableBasis b;
  b.mean_shape.resize(3, n);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < n; ++c) b.mean_shape(r, c) = rng.uniform(-1.0, 1.0);
  for (int k = 0; k < kNumShapeCoeffs; ++k) {
    Eigen::MatrixXd m(3, n);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
    b.shape_basis.push_back(m);
  }
  for (int k = 0; k < kNumExprCoeffs; ++k) {
    Eigen::MatrixXd m(3, n);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
    b.expr_basis.push_back(m);
  }
  for (int k = 0; k < kNumKeypoints; ++k) b.keypoint_indices.push_back(k);
  b.validate();
  return b;
}

ShapeCoefficients random_coeffs(RandomStream& rng) {
  ShapeCoefficients c = ShapeCoefficients::zero();
  for (int i = 0; i < kNumShapeCoeffs; ++i) c.alpha_s[i] = rng.uniform(-1.0, 1.0);
  for (int j = 0; j < kNumExprCoeffs; ++j) c.alpha_exp[j] = rng.uniform(-1.0, 1.0);
  return c;
}

RigidParams random_rigid(RandomStream& rng) {
  RigidParams r;
  r.scale = rng.uniform(0.5, 2.0);
  r.rotation = rotation_from_euler(rng.uniform(-1.2, 1.2), rng.uniform(-0.6, 0.6),
                                   rng.uniform(-0.6, 0.6));
  r.translation << rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0);
  return r;
}

} // namespace

TEST_CASE("zero coefficients reproduce the mean shape") {
  auto basis = tiny_basis(100);
  auto s = assemble_shape(basis, ShapeCoefficients::zero());
  CHECK((s.vertices - basis.mean_shape).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a unit first coefficient adds exactly the first shape basis") {
  auto basis = tiny_basis(101);
  auto coeffs = ShapeCoefficients::zero();
  coeffs.alpha_s[0] = 1.0;
  auto s = assemble_shape(basis, coeffs);
  CHECK((s.vertices - (basis.mean_shape + basis.shape_basis[0])).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("assembly matches an explicit-loop oracle") {
  RandomStream rng(102);
  auto basis = tiny_basis(103);
  auto coeffs = random_coeffs(rng);
  auto s = assemble_shape(basis, coeffs);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < basis.vertex_count(); ++c) {
      double expected = basis.mean_shape(r, c);
      for (int i = 0; i < kNumShapeCoeffs; ++i)
        expected += basis.shape_basis[i](r, c) * coeffs.alpha_s[i];
      for (int j = 0; j < kNumExprCoeffs; ++j)
        expected += basis.expr_basis[j](r, c) * coeffs.alpha_exp[j];
      CHECK(s.vertices(r, c) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("assembly rejects dimension mismatches") {
  auto basis = tiny_basis(104);
  basis.shape_basis[3].resize(3, 7);
  auto coeffs = ShapeCoefficients::zero();
  CHECK_THROWS_AS(assemble_shape(basis, coeffs), InvalidBasisError);

  auto good = tiny_basis(104);
  ShapeCoefficients short_coeffs;
  short_coeffs.alpha_s = Eigen::VectorXd::Zero(5);
  short_coeffs.alpha_exp = Eigen::VectorXd::Zero(kNumExprCoeffs);
  CHECK_THROWS_AS(assemble_shape(good, short_coeffs), InvalidBasisError);
}

TEST_CASE("identity projection drops the z row") {
  auto basis = tiny_basis(105);
  auto s = assemble_shape(basis, ShapeCoefficients::zero());
  RigidParams rigid;
  rigid.scale = 1.0;
  rigid.rotation = Eigen::Matrix3d::Identity();
  rigid.translation.setZero();
  auto v = project(s, rigid);
  CHECK((v - s.vertices.topRows(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scale and translation act affinely per vertex") {
  auto basis = tiny_basis(106);
  auto s = assemble_shape(basis, ShapeCoefficients::zero());
  RigidParams rigid;
  rigid.scale = 2.0;
  rigid.rotation = Eigen::Matrix3d::Identity();
  rigid.translation << 10.0, 10.0;
  auto v = project(s, rigid);
  for (int c = 0; c < s.vertices.cols(); ++c) {
    CHECK(v(0, c) == doctest::Approx(2.0 * s.vertices(0, c) + 10.0).epsilon(1e-14));
    CHECK(v(1, c) == doctest::Approx(2.0 * s.vertices(1, c) + 10.0).epsilon(1e-14));
  }
}

TEST_CASE("a yaw rotation matches a hand-built rotation oracle") {
  auto basis = tiny_basis(107);
  auto s = assemble_shape(basis, ShapeCoefficients::zero());
  const double yaw = 30.0 * M_PI / 180.0;
  RigidParams rigid;
  rigid.scale = 1.0;
  rigid.rotation = rotation_from_euler(yaw, 0.0, 0.0);
  rigid.translation.setZero();
  auto v = project(s, rigid);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  for (int c = 0; c < 4; ++c) {
    const double x = s.vertices(0, c), y = s.vertices(1, c), z = s.vertices(2, c);
    CHECK(v(0, c) == doctest::Approx(cy * x + sy * z).epsilon(1e-12));
    CHECK(v(1, c) == doctest::Approx(y).epsilon(1e-12));
  }
}

TEST_CASE("invalid rigid parameters are rejected") {
  auto basis = tiny_basis(108);
  auto s = assemble_shape(basis, ShapeCoefficients::zero());
  RigidParams rigid;
  rigid.scale = 1.0;
  rigid.rotation = Eigen::Matrix3d::Identity() * 1.01;
  rigid.translation.setZero();
  CHECK_THROWS_AS(project(s, rigid), InvalidRotationError);

  // A reflection is orthonormal but has determinant -1.
  rigid.rotation = Eigen::Matrix3d::Identity();
  rigid.rotation(0, 0) = -1.0;
  CHECK_THROWS_AS(project(s, rigid), InvalidRotationError);

  rigid.rotation = Eigen::Matrix3d::Identity();
  rigid.scale = -2.0;
  CHECK_THROWS_AS(project(s, rigid), InvalidArgumentError);
}

TEST_CASE("frontal normalisation removes rotation and translation but keeps scale") {
  RandomStream rng(109);
  auto basis = tiny_basis(110);

  // Already-frontal pose: normalisation equals projection.
  auto s = assemble_shape(basis, random_coeffs(rng));
  RigidParams frontal;
  frontal.scale = 1.3;
  frontal.rotation = Eigen::Matrix3d::Identity();
  frontal.translation.setZero();
  CHECK((normalize_frontal(s, frontal) - project(s, frontal)).cwiseAbs().maxCoeff() == 0.0);

  // Translation-only pose: normalisation equals projection minus t.
  RigidParams shifted = frontal;
  shifted.translation << 7.5, -3.25;
  auto vp = project(s, shifted);
  auto vf = normalize_frontal(s, shifted);
  for (int c = 0; c < s.vertices.cols(); ++c) {
    CHECK(vf(0, c) == doctest::Approx(vp(0, c) - 7.5).epsilon(1e-14));
    CHECK(vf(1, c) == doctest::Approx(vp(1, c) + 3.25).epsilon(1e-14));
  }
}

TEST_CASE("round trip: normalisation equals the direct frontal computation") {
  RandomStream rng(111);
  auto basis = tiny_basis(112);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = assemble_shape(basis, random_coeffs(rng));
    auto rigid = random_rigid(rng);
    auto vf = normalize_frontal(s, rigid);
    Eigen::MatrixXd expected = rigid.scale * s.vertices.topRows(2);
    CHECK((vf - expected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("projection is translation-equivariant exactly") {
  RandomStream rng(113);
  auto basis = tiny_basis(114);
  auto s = assemble_shape(basis, random_coeffs(rng));
  auto rigid = random_rigid(rng);
  RigidParams centred = rigid;
  centred.translation.setZero();
  auto with_t = project(s, rigid);
  auto without_t = project(s, centred);
  for (int c = 0; c < s.vertices.cols(); ++c) {
    CHECK(with_t(0, c) == without_t(0, c) + rigid.translation(0));
    CHECK(with_t(1, c) == without_t(1, c) + rigid.translation(1));
  }
}

TEST_CASE("keypoint sampling gathers the indexed columns") {
  auto basis = tiny_basis(115);

  Eigen::MatrixXd dense(2, kNumKeypoints);
  for (int c = 0; c < kNumKeypoints; ++c) {
    dense(0, c) = c * 1.5;
    dense(1, c) = -c;
  }
  auto id_basis = basis;
  id_basis.keypoint_indices.assign({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17});
  auto lm = sample_keypoints(dense, id_basis);
  for (int k = 0; k < kNumKeypoints; ++k) {
    CHECK(lm.points(k, 0) == dense(0, k));
    CHECK(lm.points(k, 1) == dense(1, k));
  }

  std::vector<int> idx = {0, 2, 4, 6, 8, 10, 12, 14, 16, 1, 3, 5, 7, 9, 11, 13, 15, 17};
  auto gather_basis = basis;
  gather_basis.keypoint_indices = idx;
  auto lm2 = sample_keypoints(dense, gather_basis);
  for (int k = 0; k < kNumKeypoints; ++k) {
    CHECK(lm2.points(k, 0) == dense(0, idx[k]));
    CHECK(lm2.points(k, 1) == dense(1, idx[k]));
  }

  // A NaN in an unselected column is irrelevant.
  Eigen::MatrixXd dense_nan(2, 20);
  dense_nan.setZero();
  dense_nan(0, 19) = std::nan("");
  auto lm3 = sample_keypoints(dense_nan, id_basis);
  CHECK(lm3.points.allFinite());

  auto bad = basis;
  bad.keypoint_indices[5] = 99;
  CHECK_THROWS_AS(sample_keypoints(dense, bad), InvalidBasisError);
}

TEST_CASE("keypoint sampling commutes across projection and normalisation when frontal") {
  RandomStream rng(116);
  auto basis = tiny_basis(117);
  auto s = assemble_shape(basis, random_coeffs(rng));
  RigidParams rigid;
  rigid.scale = 1.1;
  rigid.rotation = Eigen::Matrix3d::Identity();
  rigid.translation.setZero();
  auto a = sample_keypoints(project(s, rigid), basis);
  auto b = sample_keypoints(normalize_frontal(s, rigid), basis);
  CHECK((a.points - b.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("heatmap peak is exactly one at an integer landmark") {
  LandmarkSet lm;
  lm.points.setConstant(64.0);
  auto hm = encode_heatmaps(lm, 128, 128, 2.0);
  for (int k = 0; k < kNumKeypoints; ++k) {
    CHECK(hm.at(k, 64, 64) == 1.0);
    // Two pixels to the right: exp(-4 / (2*4)) = exp(-0.5).
    CHECK(hm.at(k, 64, 66) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }
}

TEST_CASE("heatmap channels are peak-normalised for fractional landmarks") {
  LandmarkSet lm;
  lm.points.setConstant(0.0);
  lm.points(0, 0) = 40.6;
  lm.points(0, 1) = 25.3;
  auto hm = encode_heatmaps(lm, 64, 64, 1.5);
  double peak = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) peak = std::max(peak, hm.at(0, y, x));
  CHECK(peak == 1.0);
}

TEST_CASE("out-of-frame landmarks yield an all-zero channel") {
  LandmarkSet lm;
  lm.points.setConstant(64.0);
  lm.points(3, 0) = -5.0;
  lm.points(7, 1) = 128.0; // y == H lies outside the half-open frame
  auto hm = encode_heatmaps(lm, 128, 128, 2.0);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      CHECK(hm.at(3, y, x) == 0.0);
      CHECK(hm.at(7, y, x) == 0.0);
    }
  CHECK(hm.at(0, 64, 64) == 1.0);
}

TEST_CASE("heatmap value strictly decreases with distance from the landmark") {
  LandmarkSet lm;
  lm.points.setConstant(31.7);
  auto hm = encode_heatmaps(lm, 64, 64, 2.5);
  struct Probe {
    int y, x;
  };
  const Probe probes[] = {{31, 31}, {31, 33}, {30, 35}, {20, 40}, {5, 60}};
  double prev = 2.0;
  for (const auto& p : probes) {
    const double v = hm.at(0, p.y, p.x);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("non-positive sigma or size is rejected") {
  LandmarkSet lm;
  CHECK_THROWS_AS(encode_heatmaps(lm, 64, 64, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(encode_heatmaps(lm, 64, 64, -1.0), InvalidArgumentError);
  CHECK_THROWS_AS(encode_heatmaps(lm, 0, 64, 1.0), InvalidArgumentError);
}

TEST_CASE("toy basis satisfies its invariants and round-trips through the archive") {
  auto basis = make_toy_basis(2026);
  basis.validate();
  CHECK(basis.vertex_count() == 512);
  CHECK(basis.keypoint_indices.size() == 18);

  auto again = make_toy_basis(2026);
  CHECK((basis.mean_shape - again.mean_shape).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < kNumShapeCoeffs; ++k)
    CHECK((basis.shape_basis[k] - again.shape_basis[k]).cwiseAbs().maxCoeff() == 0.0);

  auto different = make_toy_basis(9999);
  CHECK((basis.shape_basis[0] - different.shape_basis[0]).cwiseAbs().maxCoeff() > 0.0);

  const std::string path = "/tmp/mdfr_test_basis.bin";
  save_basis(basis, path);
  auto loaded = load_basis(path);
  CHECK(loaded.generation_seed == basis.generation_seed);
  CHECK((loaded.mean_shape - basis.mean_shape).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < kNumExprCoeffs; ++k)
    CHECK((loaded.expr_basis[k] - basis.expr_basis[k]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.keypoint_indices == basis.keypoint_indices);
}

TEST_CASE("landmark tables round-trip through the text format") {
  RandomStream rng(118);
  LandmarkSet lm;
  for (int k = 0; k < kNumKeypoints; ++k) {
    lm.points(k, 0) = rng.uniform(0.0, 128.0);
    lm.points(k, 1) = rng.uniform(0.0, 128.0);
  }
  const std::string path = "/tmp/mdfr_test_landmarks.txt";
  save_landmarks(lm, path);
  auto loaded = load_landmarks(path);
  CHECK((loaded.points - lm.points).cwiseAbs().maxCoeff() == 0.0);
}
