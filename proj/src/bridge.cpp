#include "mdfr/bridge.hpp"

namespace mdfr::nn {

Tensor to_tensor(const FaceImage& img) {
  Tensor t(1, 3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(0, c, y, x) = img.at(y, x, c);
  return t;
}

Tensor to_tensor(const geometry::HeatmapStack& hm) {
  Tensor t(1, geometry::kNumKeypoints, hm.height, hm.width);
  std::copy(hm.maps.begin(), hm.maps.end(), t.data());
  return t;
}

Tensor batch_images(const std::vector<FaceImage>& imgs) {
  if (imgs.empty()) throw ShapeError("batch_images: empty batch");
  const int h = imgs[0].height, w = imgs[0].width;
  Tensor t(static_cast<int>(imgs.size()), 3, h, w);
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n].height != h || imgs[n].width != w)
      throw ShapeError("batch_images: mixed image sizes");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(static_cast<int>(n), c, y, x) = imgs[n].at(y, x, c);
  }
  return t;
}

Tensor batch_heatmaps(const std::vector<geometry::HeatmapStack>& hms) {
  if (hms.empty()) throw ShapeError("batch_heatmaps: empty batch");
  const int h = hms[0].height, w = hms[0].width;
  Tensor t(static_cast<int>(hms.size()), geometry::kNumKeypoints, h, w);
  const std::size_t span = static_cast<std::size_t>(geometry::kNumKeypoints) * h * w;
  for (std::size_t n = 0; n < hms.size(); ++n) {
    if (hms[n].height != h || hms[n].width != w)
      throw ShapeError("batch_heatmaps: mixed sizes");
    std::copy(hms[n].maps.begin(), hms[n].maps.end(), t.data() + n * span);
  }
  return t;
}

FaceImage to_image(const Tensor& t, int sample) {
  if (t.c() != 3) throw ShapeError("to_image: expected 3 channels");
  if (sample < 0 || sample >= t.n()) throw ShapeError("to_image: sample index out of range");
  FaceImage img(t.h(), t.w());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) img.at(y, x, c) = t.at(sample, c, y, x);
  return img;
}

} // namespace mdfr::nn
