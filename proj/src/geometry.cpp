#include "mdfr/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mdfr::geometry {

namespace {

// Fixed orthographic projection: drop the z row.
const Eigen::Matrix<double, 2, 3> kOrtho = [] {
  Eigen::Matrix<double, 2, 3> m;
  m << 1, 0, 0, 0, 1, 0;
  return m;
}();

constexpr int kMeshRings = 16;
constexpr int kMeshSegments = 32;
constexpr int kMeshVertices = kMeshRings * kMeshSegments; // 512

// Frozen keypoint layout on the front hemisphere of the toy mesh:
// brows(4), eyes(2), cheeks(2), nose(3), mouth(4), jaw(3).
constexpr std::array<int, kNumKeypoints> kToyKeypoints = {
    139, 141, 147, 149, 172, 180, 232, 248, 240,
    272, 304, 365, 368, 371, 400, 426, 432, 438};

} // namespace

void MorphableBasis::validate() const {
  const int n = vertex_count();
  if (n < kNumKeypoints) throw InvalidBasisError("basis: fewer vertices than keypoints");
  if (mean_shape.rows() != 3) throw InvalidBasisError("basis: mean shape must be 3 x N");
  if (!mean_shape.allFinite()) throw InvalidBasisError("basis: non-finite mean shape");
  if (static_cast<int>(shape_basis.size()) != kNumShapeCoeffs)
    throw InvalidBasisError("basis: expected 40 shape basis matrices");
  if (static_cast<int>(expr_basis.size()) != kNumExprCoeffs)
    throw InvalidBasisError("basis: expected 10 expression basis matrices");
  for (const auto& b : shape_basis)
    if (b.rows() != 3 || b.cols() != n || !b.allFinite())
      throw InvalidBasisError("basis: malformed shape basis matrix");
  for (const auto& b : expr_basis)
    if (b.rows() != 3 || b.cols() != n || !b.allFinite())
      throw InvalidBasisError("basis: malformed expression basis matrix");
  if (static_cast<int>(keypoint_indices.size()) != kNumKeypoints)
    throw InvalidBasisError("basis: expected 18 keypoint indices");
  std::vector<int> sorted = keypoint_indices;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (sorted[i] < 0 || sorted[i] >= n)
      throw InvalidBasisError("basis: keypoint index out of range");
    if (i > 0 && sorted[i] == sorted[i - 1])
      throw InvalidBasisError("basis: duplicate keypoint index");
  }
}

ShapeCoefficients ShapeCoefficients::zero() {
  ShapeCoefficients c;
  c.alpha_s = Eigen::VectorXd::Zero(kNumShapeCoeffs);
  c.alpha_exp = Eigen::VectorXd::Zero(kNumExprCoeffs);
  return c;
}

void ShapeCoefficients::validate() const {
  if (alpha_s.size() != kNumShapeCoeffs || alpha_exp.size() != kNumExprCoeffs)
    throw InvalidBasisError("coefficients: expected lengths 40 and 10");
  if (!alpha_s.allFinite() || !alpha_exp.allFinite())
    throw InvalidBasisError("coefficients: non-finite values");
}

void RigidParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw InvalidArgumentError("rigid: scale must be positive");
  if (!rotation.allFinite() || !translation.allFinite())
    throw InvalidRotationError("rigid: non-finite parameters");
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw InvalidRotationError("rigid: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw InvalidRotationError("rigid: rotation determinant is not +1");
}

Eigen::Matrix3d rotation_from_euler(double yaw_rad, double pitch_rad, double roll_rad) {
  Eigen::Matrix3d ry, rx, rz;
  const double cy = std::cos(yaw_rad), sy = std::sin(yaw_rad);
  const double cp = std::cos(pitch_rad), sp = std::sin(pitch_rad);
  const double cr = std::cos(roll_rad), sr = std::sin(roll_rad);
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
  rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
  return rz * rx * ry;
}

Shape3D assemble_shape(const MorphableBasis& basis, const ShapeCoefficients& coeffs) {
  coeffs.validate();
  const int n = basis.vertex_count();
  if (basis.mean_shape.rows() != 3 ||
      static_cast<int>(basis.shape_basis.size()) != kNumShapeCoeffs ||
      static_cast<int>(basis.expr_basis.size()) != kNumExprCoeffs)
    throw InvalidBasisError("assemble_shape: malformed basis");
  Shape3D shape;
  shape.vertices = basis.mean_shape;
  for (int i = 0; i < kNumShapeCoeffs; ++i) {
    if (basis.shape_basis[i].cols() != n)
      throw InvalidBasisError("assemble_shape: shape basis dimension mismatch");
    shape.vertices.noalias() += basis.shape_basis[i] * coeffs.alpha_s[i];
  }
  for (int j = 0; j < kNumExprCoeffs; ++j) {
    if (basis.expr_basis[j].cols() != n)
      throw InvalidBasisError("assemble_shape: expression basis dimension mismatch");
    shape.vertices.noalias() += basis.expr_basis[j] * coeffs.alpha_exp[j];
  }
  return shape;
}

Eigen::MatrixXd project(const Shape3D& shape, const RigidParams& rigid) {
  rigid.validate();
  Eigen::MatrixXd v = rigid.scale * (kOrtho * (rigid.rotation * shape.vertices));
  v.colwise() += rigid.translation;
  return v;
}

Eigen::MatrixXd normalize_frontal(const Shape3D& shape, const RigidParams& rigid) {
  rigid.validate();
  return rigid.scale * (kOrtho * shape.vertices);
}

LandmarkSet sample_keypoints(const Eigen::MatrixXd& dense, const MorphableBasis& basis) {
  if (dense.rows() != 2) throw ShapeError("sample_keypoints: expected 2 x N coordinates");
  if (static_cast<int>(basis.keypoint_indices.size()) != kNumKeypoints)
    throw InvalidBasisError("sample_keypoints: expected 18 keypoint indices");
  LandmarkSet lm;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const int idx = basis.keypoint_indices[k];
    if (idx < 0 || idx >= dense.cols())
      throw InvalidBasisError("sample_keypoints: keypoint index out of range");
    lm.points(k, 0) = dense(0, idx);
    lm.points(k, 1) = dense(1, idx);
  }
  return lm;
}

HeatmapStack encode_heatmaps(const LandmarkSet& landmarks, int height, int width, double sigma) {
  if (height <= 0 || width <= 0)
    throw InvalidArgumentError("encode_heatmaps: non-positive image size");
  if (!(sigma > 0.0)) throw InvalidArgumentError("encode_heatmaps: sigma must be positive");
  HeatmapStack hm;
  hm.height = height;
  hm.width = width;
  hm.sigma = sigma;
  hm.maps.assign(static_cast<std::size_t>(kNumKeypoints) * height * width, 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> col_factor(width), row_factor(height);
  for (int k = 0; k < kNumKeypoints; ++k) {
    const double xk = landmarks.points(k, 0);
    const double yk = landmarks.points(k, 1);
    if (!(xk >= 0.0 && xk < width && yk >= 0.0 && yk < height)) continue; // off-frame: all-zero
    // Separable evaluation of exp(-(dx^2 + dy^2) / (2 sigma^2)).
    for (int x = 0; x < width; ++x) {
      const double dx = x - xk;
      col_factor[x] = std::exp(-dx * dx * inv2s2);
    }
    for (int y = 0; y < height; ++y) {
      const double dy = y - yk;
      row_factor[y] = std::exp(-dy * dy * inv2s2);
    }
    double peak = 0.0;
    for (int y = 0; y < height; ++y) {
      double* row = &hm.at(k, y, 0);
      const double fy = row_factor[y];
      for (int x = 0; x < width; ++x) {
        const double v = fy * col_factor[x];
        row[x] = v;
        if (v > peak) peak = v;
      }
    }
    // Peak-normalised so the hottest pixel is exactly 1.
    const double inv_peak = 1.0 / peak;
    for (int y = 0; y < height; ++y) {
      double* row = &hm.at(k, y, 0);
      for (int x = 0; x < width; ++x) row[x] *= inv_peak;
    }
  }
  return hm;
}

// ---- toy basis ----------------------------------------------------------------

namespace {

void mesh_vertex_angles(int index, double& theta, double& phi) {
  const int ring = index / kMeshSegments;
  const int seg = index % kMeshSegments;
  theta = M_PI * (ring + 0.5) / kMeshRings;
  phi = -M_PI + 2.0 * M_PI * seg / kMeshSegments;
}

} // namespace

MorphableBasis make_toy_basis(std::uint64_t seed) {
  MorphableBasis basis;
  basis.generation_seed = seed;
  basis.mean_shape.resize(3, kMeshVertices);

  // Egg-shaped head centred in a 128px frame, z toward the camera.
  const double cx = 64.0, cy = 64.0;
  const double rx = 30.0, ry = 40.0, rz = 30.0;
  for (int i = 0; i < kMeshVertices; ++i) {
    double theta, phi;
    mesh_vertex_angles(i, theta, phi);
    const double taper = 1.0 - 0.12 * std::cos(theta); // slightly narrower chin
    basis.mean_shape(0, i) = cx + rx * taper * std::sin(theta) * std::sin(phi);
    basis.mean_shape(1, i) = cy - ry * std::cos(theta);
    basis.mean_shape(2, i) = rz * taper * std::sin(theta) * std::cos(phi);
  }

  // Smooth low-frequency deformation fields. Expression bases are weaker and
  // weighted toward the lower half of the face.
  auto make_deformation = [&](std::uint64_t basis_seed, double amplitude, bool lower_face) {
    RandomStream rng(basis_seed);
    Eigen::MatrixXd d(3, kMeshVertices);
    double coeff[3][8];
    for (auto& axis : coeff)
      for (auto& c : axis) c = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < kMeshVertices; ++i) {
      double theta, phi;
      mesh_vertex_angles(i, theta, phi);
      const double window = std::sin(theta) * (lower_face ? 0.5 * (1.0 - std::cos(theta)) : 1.0);
      for (int a = 0; a < 3; ++a) {
        const double* c = coeff[a];
        const double v = c[0] * std::sin(theta) + c[1] * std::cos(theta) +
                         c[2] * std::sin(2.0 * theta) + c[3] * std::sin(phi) +
                         c[4] * std::cos(phi) + c[5] * std::sin(2.0 * phi) +
                         c[6] * std::sin(theta) * std::cos(phi) +
                         c[7] * std::cos(theta) * std::sin(phi);
        d(a, i) = amplitude * window * v;
      }
    }
    return d;
  };

  basis.shape_basis.reserve(kNumShapeCoeffs);
  for (int k = 0; k < kNumShapeCoeffs; ++k)
    basis.shape_basis.push_back(make_deformation(derive_seed(seed, 100 + k), 1.5, false));
  basis.expr_basis.reserve(kNumExprCoeffs);
  for (int k = 0; k < kNumExprCoeffs; ++k)
    basis.expr_basis.push_back(make_deformation(derive_seed(seed, 500 + k), 0.8, true));

  basis.keypoint_indices.assign(kToyKeypoints.begin(), kToyKeypoints.end());
  basis.validate();
  return basis;
}

std::vector<std::array<int, 3>> toy_mesh_triangles() {
  std::vector<std::array<int, 3>> tris;
  tris.reserve((kMeshRings - 1) * kMeshSegments * 2);
  for (int i = 0; i + 1 < kMeshRings; ++i) {
    for (int j = 0; j < kMeshSegments; ++j) {
      const int jn = (j + 1) % kMeshSegments;
      const int a = i * kMeshSegments + j;
      const int b = i * kMeshSegments + jn;
      const int c = (i + 1) * kMeshSegments + j;
      const int d = (i + 1) * kMeshSegments + jn;
      tris.push_back({a, b, c});
      tris.push_back({b, d, c});
    }
  }
  return tris;
}

std::vector<std::array<double, 2>> toy_mesh_params() {
  std::vector<std::array<double, 2>> params(kMeshVertices);
  for (int i = 0; i < kMeshVertices; ++i) {
    double theta, phi;
    mesh_vertex_angles(i, theta, phi);
    params[i] = {theta, phi};
  }
  return params;
}

// ---- archive IO ----------------------------------------------------------------

namespace {

constexpr char kBasisMagic[8] = {'M', 'D', 'F', 'R', 'B', 'A', 'S', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_matrix(std::istream& is) {
  const auto rows = static_cast<Eigen::Index>(read_u64(is));
  const auto cols = static_cast<Eigen::Index>(read_u64(is));
  if (rows <= 0 || cols <= 0 || rows * cols > (1 << 26))
    throw DataError("basis archive: implausible matrix size");
  Eigen::MatrixXd m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

} // namespace

void save_basis(const MorphableBasis& basis, const std::string& path) {
  basis.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open basis archive for writing: " + path);
  os.write(kBasisMagic, sizeof(kBasisMagic));
  write_u64(os, basis.generation_seed);
  write_matrix(os, basis.mean_shape);
  write_u64(os, basis.shape_basis.size());
  for (const auto& b : basis.shape_basis) write_matrix(os, b);
  write_u64(os, basis.expr_basis.size());
  for (const auto& b : basis.expr_basis) write_matrix(os, b);
  write_u64(os, basis.keypoint_indices.size());
  for (int idx : basis.keypoint_indices) write_u64(os, static_cast<std::uint64_t>(idx));
  if (!os) throw IoError("write failure on basis archive: " + path);
}

MorphableBasis load_basis(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open basis archive: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kBasisMagic, 8) != 0)
    throw DataError("not a basis archive: " + path);
  MorphableBasis basis;
  basis.generation_seed = read_u64(is);
  basis.mean_shape = read_matrix(is);
  const auto n_shape = read_u64(is);
  for (std::uint64_t i = 0; i < n_shape; ++i) basis.shape_basis.push_back(read_matrix(is));
  const auto n_expr = read_u64(is);
  for (std::uint64_t i = 0; i < n_expr; ++i) basis.expr_basis.push_back(read_matrix(is));
  const auto n_kp = read_u64(is);
  for (std::uint64_t i = 0; i < n_kp; ++i)
    basis.keypoint_indices.push_back(static_cast<int>(read_u64(is)));
  if (!is) throw DataError("truncated basis archive: " + path);
  basis.validate();
  return basis;
}

void save_landmarks(const LandmarkSet& lm, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open landmark file for writing: " + path);
  for (int k = 0; k < kNumKeypoints; ++k)
    os << k << " " << format_double(lm.points(k, 0)) << " " << format_double(lm.points(k, 1))
       << "\n";
  if (!os) throw IoError("write failure on landmark file: " + path);
}

LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open landmark file: " + path);
  LandmarkSet lm;
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int idx;
    double x, y;
    if (!(ss >> idx >> x >> y)) throw DataError("malformed landmark row: " + line);
    if (idx < 0 || idx >= kNumKeypoints) throw DataError("landmark index out of range: " + line);
    lm.points(idx, 0) = x;
    lm.points(idx, 1) = y;
    ++rows;
  }
  if (rows != kNumKeypoints) throw DataError("landmark file must have 18 rows: " + path);
  return lm;
}

} // namespace mdfr::geometry
