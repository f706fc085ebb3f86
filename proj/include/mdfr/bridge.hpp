#pragma once

#include "mdfr/geometry.hpp"
#include "mdfr/image.hpp"
#include "mdfr/tensor.hpp"

namespace mdfr::nn {

// Conversions between the pipeline's value types and NCHW tensors.
Tensor to_tensor(const FaceImage& img);                       // (1,3,H,W)
Tensor to_tensor(const geometry::HeatmapStack& hm);           // (1,18,H,W)
Tensor batch_images(const std::vector<FaceImage>& imgs);      // (N,3,H,W)
Tensor batch_heatmaps(const std::vector<geometry::HeatmapStack>& hms);

FaceImage to_image(const Tensor& t, int sample = 0);

} // namespace mdfr::nn
