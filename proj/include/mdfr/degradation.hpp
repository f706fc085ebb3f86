#pragma once

#include <string>

#include "mdfr/image.hpp"

namespace mdfr::degradation {

enum class BlurKind { kGaussian, kUniform, kAverage };

std::string blur_kind_name(BlurKind kind);
BlurKind blur_kind_from_name(const std::string& name);

// One sampled corruption configuration. All numeric fields live in closed
// ranges fixed by the recipe; `seed` makes the application deterministic.
struct DegradationSpec {
  double color_mean = 0.1, color_std = 0.1;       // [0.1, 0.2]
  BlurKind blur_kind = BlurKind::kGaussian;
  double gaussian_blur_mean = 0.1;                // [0.1, 0.2]
  double gaussian_blur_std = 0.1;                 // [0.1, 0.2], kernel sigma in px
  double gamma_low = 0.1;                         // [0.1, 0.3]
  double gamma_high = 1.0;                        // [1, 3]
  int downsample_factor = 2;                      // >= 1
  double noise_mean = 0.1, noise_std = 0.1;       // [0.1, 0.5]
  bool active_color = true;
  bool active_blur = false;
  bool active_gamma = false;
  bool active_downsample = false;
  bool active_noise = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_text() const; // flat key=value block, single line
  static DegradationSpec from_text(const std::string& text);
};

// Per-run overrides that are not part of the sampled spec.
struct DegradeOptions {
  double blur_sigma_scale = 1.0; // multiplies the literal kernel sigma
};

DegradationSpec sample_spec(std::uint64_t rng_seed);

FaceImage color_warp(const FaceImage& img, double mean, double stddev, std::uint64_t seed);
// Reflect-padded 2D convolution with a normalised kernel; ksize odd.
FaceImage blur(const FaceImage& img, BlurKind kind, int ksize, double sigma);
FaceImage gamma_adjust(const FaceImage& img, double gamma);
FaceImage downsample_bicubic(const FaceImage& img, int factor);
FaceImage upsample_bicubic(const FaceImage& img, int out_h, int out_w);
FaceImage add_gaussian_noise(const FaceImage& img, double mean, double stddev,
                             std::uint64_t seed);

// Applies the active families in fixed order:
// color -> blur -> gamma -> downsample+upsample -> noise.
FaceImage degrade(const FaceImage& img, const DegradationSpec& spec,
                  const DegradeOptions& opts = {});

// Catmull-Rom resampling of a single plane, edge-clamped; shared with the
// feature-map resize in the critics.
void resize_bicubic_plane(const double* src, int src_h, int src_w, double* dst, int dst_h,
                          int dst_w);

// Kernel size used for the sampled blur sigma.
int blur_kernel_size(double sigma);

} // namespace mdfr::degradation
