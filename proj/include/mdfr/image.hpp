#pragma once

#include <string>
#include <vector>

#include "mdfr/common.hpp"

namespace mdfr {

// RGB image with values in [0,1], row-major, interleaved channels.
// The standard pipeline works at 128x128 but the type itself is size-agnostic.
struct FaceImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels; // height*width*3, index (y*width + x)*3 + c

  FaceImage() = default;
  FaceImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  std::size_t size() const { return pixels.size(); }
  bool same_shape(const FaceImage& o) const { return height == o.height && width == o.width; }
};

FaceImage constant_image(int h, int w, double value);
void clip01(FaceImage& img);
bool all_finite(const FaceImage& img);

// 8-bit PNG round trip. Writing quantizes with round(v*255).
FaceImage load_png(const std::string& path);
void save_png(const FaceImage& img, const std::string& path);

// Horizontal strip of equally sized tiles separated by a 2px divider;
// used by the report contact sheets.
FaceImage hconcat_images(const std::vector<FaceImage>& tiles);
FaceImage vconcat_images(const std::vector<FaceImage>& rows);

} // namespace mdfr
