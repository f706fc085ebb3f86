#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdfr/common.hpp"

namespace mdfr::geometry {

inline constexpr int kNumShapeCoeffs = 40;
inline constexpr int kNumExprCoeffs = 10;
inline constexpr int kNumKeypoints = 18;

// Linear statistical face shape model: mean plus shape/expression bases.
struct MorphableBasis {
  Eigen::MatrixXd mean_shape;                // 3 x N
  std::vector<Eigen::MatrixXd> shape_basis;  // 40 entries, each 3 x N
  std::vector<Eigen::MatrixXd> expr_basis;   // 10 entries, each 3 x N
  std::vector<int> keypoint_indices;         // 18 distinct vertex indices
  std::uint64_t generation_seed = 0;

  int vertex_count() const { return static_cast<int>(mean_shape.cols()); }
  void validate() const; // throws InvalidBasisError
};

struct ShapeCoefficients {
  Eigen::VectorXd alpha_s;   // length 40
  Eigen::VectorXd alpha_exp; // length 10

  static ShapeCoefficients zero();
  void validate() const;
};

// Similarity pose for the scaled orthographic camera.
struct RigidParams {
  double scale = 1.0;          // f > 0
  Eigen::Matrix3d rotation;    // proper orthonormal
  Eigen::Vector2d translation; // pixels

  void validate() const; // throws InvalidRotationError / InvalidArgumentError
};

Eigen::Matrix3d rotation_from_euler(double yaw_rad, double pitch_rad, double roll_rad);

struct Shape3D {
  Eigen::MatrixXd vertices; // 3 x N
};

// 18 keypoints in pixel coordinates, origin top-left, x right, y down.
struct LandmarkSet {
  Eigen::MatrixXd points; // 18 x 2

  LandmarkSet() : points(kNumKeypoints, 2) { points.setZero(); }
};

// Peak-normalised Gaussian heatmaps, one channel per keypoint.
struct HeatmapStack {
  int height = 0;
  int width = 0;
  double sigma = 0.0;
  std::vector<double> maps; // kNumKeypoints * height * width, channel-major

  double at(int k, int y, int x) const {
    return maps[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  double& at(int k, int y, int x) {
    return maps[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
};

// S = mean + sum_i A_s[i] a_s[i] + sum_j A_exp[j] a_exp[j]
Shape3D assemble_shape(const MorphableBasis& basis, const ShapeCoefficients& coeffs);

// Scaled orthographic projection: rotate in 3D, drop z, scale, translate.
Eigen::MatrixXd project(const Shape3D& shape, const RigidParams& rigid); // 2 x N

// Frontal normalisation: rotation and translation removed, scale retained.
Eigen::MatrixXd normalize_frontal(const Shape3D& shape, const RigidParams& rigid); // 2 x N

LandmarkSet sample_keypoints(const Eigen::MatrixXd& dense, const MorphableBasis& basis);

HeatmapStack encode_heatmaps(const LandmarkSet& landmarks, int height, int width, double sigma);

// Deterministic toy basis: ellipsoidal face mesh centred in the 128px frame
// with smooth low-frequency deformation bases. Triangles are exposed for the
// corpus renderer.
MorphableBasis make_toy_basis(std::uint64_t seed);
std::vector<std::array<int, 3>> toy_mesh_triangles();
// Angular (u,v) parameters per toy-mesh vertex, used for texture synthesis.
std::vector<std::array<double, 2>> toy_mesh_params();

// Basis archive IO; loader re-validates all invariants.
void save_basis(const MorphableBasis& basis, const std::string& path);
MorphableBasis load_basis(const std::string& path);

// Landmark table IO: one "index x y" row per keypoint.
void save_landmarks(const LandmarkSet& lm, const std::string& path);
LandmarkSet load_landmarks(const std::string& path);

} // namespace mdfr::geometry
