#pragma once

#include "mdfr/degradation.hpp"
#include "mdfr/geometry.hpp"
#include "mdfr/image.hpp"

namespace mdfr::data {

// Identity = shape coefficients plus a texture field, both expanded
// deterministically from one seed.
struct ToyIdentity {
  std::uint64_t identity_seed = 0;
  geometry::ShapeCoefficients coeffs;
  std::uint64_t texture_seed = 0;
};

ToyIdentity make_toy_identity(std::uint64_t identity_seed);

// Smooth per-vertex color field with fixed darkened eye/mouth markers.
std::vector<std::array<double, 3>> identity_vertex_colors(const ToyIdentity& identity);

struct RenderResult {
  FaceImage image;
  geometry::LandmarkSet landmarks;
};

// Painter's-algorithm rasterisation of the textured toy mesh under the scaled
// orthographic camera; flat shading scaled by illum. Landmarks are the
// projected keypoints. Throws RenderError when a keypoint leaves the frame.
RenderResult render_face(const geometry::MorphableBasis& basis, const ToyIdentity& identity,
                         const geometry::RigidParams& rigid, double illum, int image_size = 128);

struct SampleRecord {
  int identity_id = 0;
  std::uint64_t identity_seed = 0;
  double yaw_deg = 0, pitch_deg = 0, roll_deg = 0;
  double scale = 1.0;
  double tx = 0, ty = 0;
  double illum = 1.0;
  std::string hq_path, lq_path, frontal_path; // relative to the corpus root
  geometry::LandmarkSet lp;                   // profile landmarks
  geometry::LandmarkSet lt;                   // frontal landmarks
  degradation::DegradationSpec spec;

  geometry::RigidParams rigid() const;
};

struct CorpusOptions {
  int n_identities = 32;
  std::vector<double> yaw_degrees = {0, 30, -30, 60, -60, 90, -90};
  std::uint64_t seed = 1;
  std::string out_dir;
  std::uint64_t basis_seed = 2026;
  int image_size = 128;
  double blur_sigma_scale = 1.0;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::uint64_t basis_seed = 0;
  int image_size = 128;
  int n_identities = 0;
  double blur_sigma_scale = 1.0;
  std::vector<SampleRecord> records;
};

// Renders the identity x pose grid, degrades the profile images, writes PNGs
// under <out_dir>/<identity>/<pose>/{hq,lq,frontal}.png plus manifest.txt and
// the basis archive.
Manifest build_corpus(const CorpusOptions& opts);

void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

// Re-derives every record's landmarks from its stored pose parameters and
// checks them against the manifest within `tol`.
void validate_manifest(const Manifest& manifest, const geometry::MorphableBasis& basis,
                       double tol = 1e-6);

enum class Phase { kFrnS, kFfnS, kFrnTi };

struct Batch {
  std::vector<FaceImage> low;     // degraded inputs
  std::vector<FaceImage> high;    // clean profile images
  std::vector<FaceImage> target;  // frontal targets
  std::vector<geometry::LandmarkSet> lp;
  std::vector<geometry::LandmarkSet> lt;
  std::vector<geometry::RigidParams> rigid;
  std::vector<geometry::ShapeCoefficients> coeffs;
  std::vector<int> identity_ids;
};

// Loads the tensors one phase needs; indices select manifest records.
Batch load_batch(const Manifest& manifest, const std::string& corpus_root,
                 const std::vector<int>& indices, Phase phase);

std::string pose_dir_name(double yaw_deg);

} // namespace mdfr::data
