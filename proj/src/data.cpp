#include "mdfr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mdfr::data {

namespace fs = std::filesystem;

ToyIdentity make_toy_identity(std::uint64_t identity_seed) {
  ToyIdentity id;
  id.identity_seed = identity_seed;
  id.texture_seed = derive_seed(identity_seed, 0x7E7);
  RandomStream rng(derive_seed(identity_seed, 0x5A));
  id.coeffs.alpha_s.resize(geometry::kNumShapeCoeffs);
  id.coeffs.alpha_exp.resize(geometry::kNumExprCoeffs);
  for (int i = 0; i < geometry::kNumShapeCoeffs; ++i)
    id.coeffs.alpha_s[i] = std::clamp(rng.normal(0.0, 1.0), -2.5, 2.5);
  for (int j = 0; j < geometry::kNumExprCoeffs; ++j)
    id.coeffs.alpha_exp[j] = std::clamp(rng.normal(0.0, 0.5), -1.5, 1.5);
  return id;
}

std::vector<std::array<double, 3>> identity_vertex_colors(const ToyIdentity& identity) {
  const auto params = geometry::toy_mesh_params();
  std::vector<std::array<double, 3>> colors(params.size());
  RandomStream rng(identity.texture_seed);
  double base[3], coeff[3][6];
  base[0] = rng.uniform(0.35, 0.85);
  base[1] = rng.uniform(0.30, 0.80);
  base[2] = rng.uniform(0.30, 0.80);
  for (auto& ch : coeff)
    for (auto& c : ch) c = rng.uniform(-1.0, 1.0);

  // Fixed facial markers shared by all identities: eye pair and mouth.
  struct Marker {
    double theta, phi, radius, strength;
  };
  const Marker markers[] = {{0.35 * M_PI, -0.25 * M_PI, 0.22, 0.55},
                            {0.35 * M_PI, 0.25 * M_PI, 0.22, 0.55},
                            {0.72 * M_PI, 0.0, 0.30, 0.45}};

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double theta = params[i][0];
    const double phi = params[i][1];
    double attenuation = 1.0;
    for (const auto& m : markers) {
      const double dt = theta - m.theta;
      const double dp = phi - m.phi;
      attenuation *= 1.0 - m.strength * std::exp(-(dt * dt + dp * dp) / (2.0 * m.radius * m.radius));
    }
    for (int c = 0; c < 3; ++c) {
      const double* k = coeff[c];
      const double field = k[0] * std::sin(theta) + k[1] * std::cos(theta) +
                           k[2] * std::sin(2.0 * theta) + k[3] * std::sin(phi) +
                           k[4] * std::cos(phi) + k[5] * std::sin(2.0 * phi);
      colors[i][c] = std::clamp((base[c] + 0.22 * field) * attenuation, 0.05, 1.0);
    }
  }
  return colors;
}

namespace {

constexpr double kBackground = 0.1;

struct ScreenVertex {
  double x, y, depth;
};

} // namespace

RenderResult render_face(const geometry::MorphableBasis& basis, const ToyIdentity& identity,
                         const geometry::RigidParams& rigid, double illum, int image_size) {
  if (!(illum > 0.0)) throw InvalidArgumentError("render_face: illum must be positive");
  const geometry::Shape3D shape = geometry::assemble_shape(basis, identity.coeffs);
  const Eigen::MatrixXd rotated = rigid.rotation * shape.vertices;
  const Eigen::MatrixXd projected = geometry::project(shape, rigid);

  RenderResult out;
  out.landmarks = geometry::sample_keypoints(projected, basis);
  for (int k = 0; k < geometry::kNumKeypoints; ++k) {
    const double x = out.landmarks.points(k, 0);
    const double y = out.landmarks.points(k, 1);
    if (!(x >= 0.0 && x < image_size && y >= 0.0 && y < image_size))
      throw RenderError("render_face: keypoint " + std::to_string(k) + " outside the frame");
  }

  const int n = basis.vertex_count();
  std::vector<ScreenVertex> sv(n);
  for (int i = 0; i < n; ++i)
    sv[i] = {projected(0, i), projected(1, i), rotated(2, i)};

  const auto colors = identity_vertex_colors(identity);
  auto tris = geometry::toy_mesh_triangles();
  // Painter's algorithm: camera looks along +z, so draw far (small z) first.
  std::vector<double> tri_depth(tris.size());
  for (std::size_t t = 0; t < tris.size(); ++t)
    tri_depth[t] = (sv[tris[t][0]].depth + sv[tris[t][1]].depth + sv[tris[t][2]].depth) / 3.0;
  std::vector<std::size_t> order(tris.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tri_depth[a] < tri_depth[b]; });

  out.image = constant_image(image_size, image_size, kBackground);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const auto& tri = tris[order[oi]];
    const ScreenVertex& a = sv[tri[0]];
    const ScreenVertex& b = sv[tri[1]];
    const ScreenVertex& c = sv[tri[2]];
    const double area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(image_size - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(image_size - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    const double inv_area = 1.0 / area;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double w0 = ((b.x - x) * (c.y - y) - (c.x - x) * (b.y - y)) * inv_area;
        const double w1 = ((c.x - x) * (a.y - y) - (a.x - x) * (c.y - y)) * inv_area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) {
          const double v = w0 * colors[tri[0]][ch] + w1 * colors[tri[1]][ch] +
                           w2 * colors[tri[2]][ch];
          out.image.at(y, x, ch) = std::clamp(v * illum, 0.0, 1.0);
        }
      }
  }
  return out;
}

geometry::RigidParams SampleRecord::rigid() const {
  geometry::RigidParams r;
  r.scale = scale;
  r.rotation = geometry::rotation_from_euler(yaw_deg * M_PI / 180.0, pitch_deg * M_PI / 180.0,
                                             roll_deg * M_PI / 180.0);
  r.translation << tx, ty;
  return r;
}

std::string pose_dir_name(double yaw_deg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "yaw%+04d", static_cast<int>(std::lround(yaw_deg)));
  return buf;
}

Manifest build_corpus(const CorpusOptions& opts) {
  if (opts.n_identities < 1) throw InvalidArgumentError("build_corpus: need at least one identity");
  if (opts.yaw_degrees.empty()) throw InvalidArgumentError("build_corpus: empty pose list");
  if (opts.out_dir.empty()) throw InvalidArgumentError("build_corpus: missing output directory");

  const auto basis = geometry::make_toy_basis(opts.basis_seed);
  fs::create_directories(opts.out_dir);
  geometry::save_basis(basis, (fs::path(opts.out_dir) / "basis.bin").string());

  Manifest manifest;
  manifest.seed = opts.seed;
  manifest.basis_seed = opts.basis_seed;
  manifest.image_size = opts.image_size;
  manifest.n_identities = opts.n_identities;
  manifest.blur_sigma_scale = opts.blur_sigma_scale;

  const Eigen::Vector3d mesh_center(64.0, 64.0, 0.0);
  const degradation::DegradeOptions degrade_opts{opts.blur_sigma_scale};

  for (int id = 0; id < opts.n_identities; ++id) {
    const std::uint64_t identity_seed = derive_seed(opts.seed, 1000 + id);
    const ToyIdentity identity = make_toy_identity(identity_seed);
    for (std::size_t p = 0; p < opts.yaw_degrees.size(); ++p) {
      const double yaw = opts.yaw_degrees[p];
      RandomStream rng(derive_seed(opts.seed, 0xC0 + 1000 * id + p));

      SampleRecord rec;
      rec.identity_id = id;
      rec.identity_seed = identity_seed;
      rec.yaw_deg = yaw;
      rec.pitch_deg = rng.uniform(-4.0, 4.0);
      rec.roll_deg = rng.uniform(-3.0, 3.0);
      rec.scale = rng.uniform(0.9, 1.1);
      rec.illum = rng.uniform(0.75, 1.0);

      // Recenter the rotated head near the frame centre, with jitter.
      const Eigen::Matrix3d rot = geometry::rotation_from_euler(
          yaw * M_PI / 180.0, rec.pitch_deg * M_PI / 180.0, rec.roll_deg * M_PI / 180.0);
      const Eigen::Vector3d spun = rot * mesh_center;
      rec.tx = 64.0 - rec.scale * spun.x() + rng.uniform(-3.0, 3.0);
      rec.ty = 64.0 - rec.scale * spun.y() + rng.uniform(-3.0, 3.0);

      const auto hq = render_face(basis, identity, rec.rigid(), rec.illum, opts.image_size);

      geometry::RigidParams frontal_rigid;
      frontal_rigid.scale = rec.scale;
      frontal_rigid.rotation = Eigen::Matrix3d::Identity();
      frontal_rigid.translation.setZero();
      const auto frontal =
          render_face(basis, identity, frontal_rigid, rec.illum, opts.image_size);

      rec.spec = degradation::sample_spec(derive_seed(opts.seed, 0xD00 + 1000 * id + p));
      const FaceImage lq = degradation::degrade(hq.image, rec.spec, degrade_opts);

      const fs::path rel = fs::path(std::to_string(id)) / pose_dir_name(yaw);
      fs::create_directories(fs::path(opts.out_dir) / rel);
      rec.hq_path = (rel / "hq.png").string();
      rec.lq_path = (rel / "lq.png").string();
      rec.frontal_path = (rel / "frontal.png").string();
      save_png(hq.image, (fs::path(opts.out_dir) / rec.hq_path).string());
      save_png(lq, (fs::path(opts.out_dir) / rec.lq_path).string());
      save_png(frontal.image, (fs::path(opts.out_dir) / rec.frontal_path).string());

      rec.lp = hq.landmarks;
      rec.lt = frontal.landmarks;
      manifest.records.push_back(std::move(rec));
    }
  }

  save_manifest(manifest, (fs::path(opts.out_dir) / "manifest.txt").string());
  return manifest;
}

namespace {

std::string landmarks_to_text(const geometry::LandmarkSet& lm) {
  std::ostringstream os;
  for (int k = 0; k < geometry::kNumKeypoints; ++k) {
    if (k) os << ";";
    os << format_double(lm.points(k, 0)) << "," << format_double(lm.points(k, 1));
  }
  return os.str();
}

geometry::LandmarkSet landmarks_from_text(const std::string& text) {
  geometry::LandmarkSet lm;
  std::istringstream is(text);
  std::string pair;
  int k = 0;
  while (std::getline(is, pair, ';')) {
    const auto comma = pair.find(',');
    if (comma == std::string::npos || k >= geometry::kNumKeypoints)
      throw DataError("malformed landmark field: " + text);
    lm.points(k, 0) = std::stod(pair.substr(0, comma));
    lm.points(k, 1) = std::stod(pair.substr(comma + 1));
    ++k;
  }
  if (k != geometry::kNumKeypoints) throw DataError("landmark field must have 18 points");
  return lm;
}

} // namespace

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open manifest for writing: " + path);
  os << "mdfr-manifest v1\n";
  os << "seed=" << manifest.seed << " basis_seed=" << manifest.basis_seed
     << " image_size=" << manifest.image_size << " n_identities=" << manifest.n_identities
     << " blur_sigma_scale=" << format_double(manifest.blur_sigma_scale) << "\n";
  for (const auto& r : manifest.records) {
    os << "record id=" << r.identity_id << " identity_seed=" << r.identity_seed
       << " yaw_deg=" << format_double(r.yaw_deg) << " pitch_deg=" << format_double(r.pitch_deg)
       << " roll_deg=" << format_double(r.roll_deg) << " scale=" << format_double(r.scale)
       << " tx=" << format_double(r.tx) << " ty=" << format_double(r.ty)
       << " illum=" << format_double(r.illum) << " hq=" << r.hq_path << " lq=" << r.lq_path
       << " frontal=" << r.frontal_path << " lp=" << landmarks_to_text(r.lp)
       << " lt=" << landmarks_to_text(r.lt) << " | " << r.spec.to_text() << "\n";
  }
  if (!os) throw IoError("write failure on manifest: " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "mdfr-manifest v1")
    throw DataError("not a corpus manifest: " + path);
  Manifest manifest;
  if (!std::getline(is, line)) throw DataError("manifest missing header line");
  {
    std::istringstream hs(line);
    std::string token;
    while (hs >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw DataError("malformed manifest header: " + token);
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "seed") manifest.seed = std::stoull(value);
      else if (key == "basis_seed") manifest.basis_seed = std::stoull(value);
      else if (key == "image_size") manifest.image_size = std::stoi(value);
      else if (key == "n_identities") manifest.n_identities = std::stoi(value);
      else if (key == "blur_sigma_scale") manifest.blur_sigma_scale = std::stod(value);
      else throw DataError("unknown manifest header key: " + key);
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto bar = line.find(" | ");
    if (bar == std::string::npos) throw DataError("manifest record missing spec block");
    SampleRecord rec;
    rec.spec = degradation::DegradationSpec::from_text(line.substr(bar + 3));
    std::istringstream rs(line.substr(0, bar));
    std::string token;
    rs >> token;
    if (token != "record") throw DataError("malformed manifest record: " + line);
    while (rs >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw DataError("malformed record token: " + token);
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "id") rec.identity_id = std::stoi(value);
      else if (key == "identity_seed") rec.identity_seed = std::stoull(value);
      else if (key == "yaw_deg") rec.yaw_deg = std::stod(value);
      else if (key == "pitch_deg") rec.pitch_deg = std::stod(value);
      else if (key == "roll_deg") rec.roll_deg = std::stod(value);
      else if (key == "scale") rec.scale = std::stod(value);
      else if (key == "tx") rec.tx = std::stod(value);
      else if (key == "ty") rec.ty = std::stod(value);
      else if (key == "illum") rec.illum = std::stod(value);
      else if (key == "hq") rec.hq_path = value;
      else if (key == "lq") rec.lq_path = value;
      else if (key == "frontal") rec.frontal_path = value;
      else if (key == "lp") rec.lp = landmarks_from_text(value);
      else if (key == "lt") rec.lt = landmarks_from_text(value);
      else throw DataError("unknown record key: " + key);
    }
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

void validate_manifest(const Manifest& manifest, const geometry::MorphableBasis& basis,
                       double tol) {
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    const ToyIdentity identity = make_toy_identity(rec.identity_seed);
    const auto shape = geometry::assemble_shape(basis, identity.coeffs);
    const auto rigid = rec.rigid();
    const auto lp = geometry::sample_keypoints(geometry::project(shape, rigid), basis);
    const auto lt =
        geometry::sample_keypoints(geometry::normalize_frontal(shape, rigid), basis);
    const double err_p = (lp.points - rec.lp.points).cwiseAbs().maxCoeff();
    const double err_t = (lt.points - rec.lt.points).cwiseAbs().maxCoeff();
    if (err_p > tol || err_t > tol)
      throw DataError("manifest record " + std::to_string(i) +
                      " fails landmark consistency: max error " +
                      format_double(std::max(err_p, err_t)));
  }
}

Batch load_batch(const Manifest& manifest, const std::string& corpus_root,
                 const std::vector<int>& indices, Phase phase) {
  Batch batch;
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(manifest.records.size()))
      throw DataError("load_batch: record index out of range");
    const auto& rec = manifest.records[idx];
    batch.identity_ids.push_back(rec.identity_id);
    const auto full = [&](const std::string& rel) {
      return (fs::path(corpus_root) / rel).string();
    };
    switch (phase) {
      case Phase::kFrnS:
        batch.low.push_back(load_png(full(rec.lq_path)));
        batch.high.push_back(load_png(full(rec.hq_path)));
        break;
      case Phase::kFfnS:
        batch.high.push_back(load_png(full(rec.hq_path)));
        batch.target.push_back(load_png(full(rec.frontal_path)));
        batch.lp.push_back(rec.lp);
        batch.lt.push_back(rec.lt);
        break;
      case Phase::kFrnTi:
        batch.low.push_back(load_png(full(rec.lq_path)));
        batch.high.push_back(load_png(full(rec.hq_path)));
        batch.lp.push_back(rec.lp);
        batch.rigid.push_back(rec.rigid());
        batch.coeffs.push_back(make_toy_identity(rec.identity_seed).coeffs);
        break;
    }
  }
  return batch;
}

} // namespace mdfr::data
