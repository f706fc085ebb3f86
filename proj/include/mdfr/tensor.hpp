#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mdfr/common.hpp"

namespace mdfr::nn {

// Dense NCHW tensor of doubles. Scalars are (1,1,1,1); embeddings (N,D,1,1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : dims_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, 0.0) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("Tensor: negative dimension");
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }
  static Tensor full(int n, int c, int h, int w, double v) {
    Tensor t(n, c, h, w);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  std::string shape_string() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  double at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  double* ptr(int n, int c, int h = 0, int w = 0) {
    return data_.data() + (((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w);
  }
  const double* ptr(int n, int c, int h = 0, int w = 0) const {
    return data_.data() + (((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  double item() const {
    if (numel() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_string());
    return data_[0];
  }

  bool all_finite() const;

 private:
  std::array<int, 4> dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

} // namespace mdfr::nn
