#include "mdfr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <Eigen/Core>

namespace mdfr::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using RowMap = Eigen::Map<RowMat>;
using ColMap = Eigen::Map<ColMat>;
using CRowMap = Eigen::Map<const RowMat>;
using CColMap = Eigen::Map<const ColMat>;

bool any_requires_grad(const std::vector<VarPtr>& xs) {
  for (const auto& x : xs)
    if (x->requires_grad) return true;
  return false;
}

VarPtr make_node(Tensor value, std::vector<VarPtr> parents,
                 std::function<void(Variable&)> backward_op) {
  auto node = std::make_shared<Variable>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->requires_grad = any_requires_grad(node->parents);
  if (node->requires_grad) node->backward_op = std::move(backward_op);
  return node;
}

void check_same_shape(const VarPtr& a, const VarPtr& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_string() +
                     " vs " + b->value.shape_string());
}

} // namespace

std::string Tensor::shape_string() const {
  return "(" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
         std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + ")";
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void backward(const VarPtr& root) {
  // Iterative post-order over the subgraph that needs gradients.
  std::vector<Variable*> order;
  std::vector<std::pair<Variable*, std::size_t>> stack;
  std::unordered_set<Variable*> visited;
  if (!root->requires_grad) return;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Variable* parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Variable* node = *it;
    if (node->backward_op) node->backward_op(*node);
  }
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_node(std::move(out), {a, b}, [](Variable& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      double* pg = p->grad.data();
      const double* g = self.grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i];
    }
  });
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return make_node(std::move(out), {a, b}, [](Variable& self) {
    const double* g = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto& p = self.parents[0];
      p->ensure_grad();
      double* pg = p->grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& p = self.parents[1];
      p->ensure_grad();
      double* pg = p->grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] -= g[i];
    }
  });
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  return make_node(std::move(out), {a, b}, [](Variable& self) {
    const double* g = self.grad.data();
    const double* va = self.parents[0]->value.data();
    const double* vb = self.parents[1]->value.data();
    if (self.parents[0]->requires_grad) {
      auto& p = self.parents[0];
      p->ensure_grad();
      double* pg = p->grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i] * vb[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& p = self.parents[1];
      p->ensure_grad();
      double* pg = p->grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i] * va[i];
    }
  });
}

VarPtr affine(const VarPtr& a, double k, double c) {
  Tensor out = a->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = k * po[i] + c;
  return make_node(std::move(out), {a}, [k](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    double* pg = p->grad.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += k * g[i];
  });
}

VarPtr scale_by(const VarPtr& x, const VarPtr& s) {
  if (s->value.numel() != 1) throw ShapeError("scale_by: scale must be scalar");
  const double sv = s->value.item();
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] *= sv;
  return make_node(std::move(out), {x, s}, [sv](Variable& self) {
    const double* g = self.grad.data();
    const double* vx = self.parents[0]->value.data();
    if (self.parents[0]->requires_grad) {
      auto& p = self.parents[0];
      p->ensure_grad();
      double* pg = p->grad.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += sv * g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& p = self.parents[1];
      p->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) acc += g[i] * vx[i];
      p->grad[0] += acc;
    }
  });
}

VarPtr vsum(const VarPtr& x) {
  double acc = 0.0;
  const double* px = x->value.data();
  for (std::size_t i = 0; i < x->value.numel(); ++i) acc += px[i];
  return make_node(Tensor::scalar(acc), {x}, [](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0];
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < p->grad.numel(); ++i) pg[i] += g;
  });
}

VarPtr vmean(const VarPtr& x) {
  const double inv = 1.0 / static_cast<double>(x->value.numel());
  double acc = 0.0;
  const double* px = x->value.data();
  for (std::size_t i = 0; i < x->value.numel(); ++i) acc += px[i];
  return make_node(Tensor::scalar(acc * inv), {x}, [inv](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0] * inv;
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < p->grad.numel(); ++i) pg[i] += g;
  });
}

VarPtr vlog(const VarPtr& x) {
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::log(po[i]);
  return make_node(std::move(out), {x}, [](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    const double* vx = p->value.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i] / vx[i];
  });
}

VarPtr vpow(const VarPtr& x, double p) {
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::pow(po[i], p);
  return make_node(std::move(out), {x}, [p](Variable& self) {
    auto& par = self.parents[0];
    if (!par->requires_grad) return;
    par->ensure_grad();
    const double* g = self.grad.data();
    const double* vx = par->value.data();
    double* pg = par->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      pg[i] += p * std::pow(vx[i], p - 1.0) * g[i];
  });
}

VarPtr sigmoid(const VarPtr& x) {
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = po[i];
    po[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor saved = out;
  return make_node(std::move(out), {x}, [saved = std::move(saved)](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    const double* y = saved.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

VarPtr leaky_relu(const VarPtr& x, double slope) {
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (po[i] < 0.0) po[i] *= slope;
  return make_node(std::move(out), {x}, [slope](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    const double* vx = p->value.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      pg[i] += g[i] * (vx[i] >= 0.0 ? 1.0 : slope);
  });
}

VarPtr clamp(const VarPtr& x, double lo, double hi) {
  Tensor out = x->value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::clamp(po[i], lo, hi);
  return make_node(std::move(out), {x}, [lo, hi](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    const double* vx = p->value.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      if (vx[i] > lo && vx[i] < hi) pg[i] += g[i];
  });
}

VarPtr concat_channels(const std::vector<VarPtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const int n = xs[0]->value.n(), h = xs[0]->value.h(), w = xs[0]->value.w();
  int c_total = 0;
  for (const auto& x : xs) {
    if (x->value.n() != n || x->value.h() != h || x->value.w() != w)
      throw ShapeError("concat_channels: incompatible shapes");
    c_total += x->value.c();
  }
  Tensor out(n, c_total, h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int in = 0; in < n; ++in) {
    std::size_t dst = (static_cast<std::size_t>(in) * c_total) * plane;
    for (const auto& x : xs) {
      const std::size_t span = static_cast<std::size_t>(x->value.c()) * plane;
      const double* src = x->value.data() + static_cast<std::size_t>(in) * span;
      std::copy(src, src + span, out.data() + dst);
      dst += span;
    }
  }
  return make_node(std::move(out), xs, [n, plane, c_total](Variable& self) {
    for (int in = 0; in < n; ++in) {
      std::size_t src = (static_cast<std::size_t>(in) * c_total) * plane;
      for (auto& p : self.parents) {
        const std::size_t span = static_cast<std::size_t>(p->value.c()) * plane;
        if (p->requires_grad) {
          p->ensure_grad();
          double* pg = p->grad.data() + static_cast<std::size_t>(in) * span;
          const double* g = self.grad.data() + src;
          for (std::size_t i = 0; i < span; ++i) pg[i] += g[i];
        }
        src += span;
      }
    }
  });
}

VarPtr slice_channels(const VarPtr& x, int c0, int c1) {
  const auto& v = x->value;
  if (c0 < 0 || c1 > v.c() || c0 >= c1) throw ShapeError("slice_channels: bad range");
  const int n = v.n(), h = v.h(), w = v.w();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out(n, c1 - c0, h, w);
  for (int in = 0; in < n; ++in) {
    const double* src = v.data() + ((static_cast<std::size_t>(in) * v.c()) + c0) * plane;
    double* dst = out.data() + (static_cast<std::size_t>(in) * (c1 - c0)) * plane;
    std::copy(src, src + static_cast<std::size_t>(c1 - c0) * plane, dst);
  }
  return make_node(std::move(out), {x}, [c0, c1, plane](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const int n = p->value.n(), c = p->value.c();
    for (int in = 0; in < n; ++in) {
      double* pg = p->grad.data() + ((static_cast<std::size_t>(in) * c) + c0) * plane;
      const double* g = self.grad.data() + (static_cast<std::size_t>(in) * (c1 - c0)) * plane;
      for (std::size_t i = 0; i < static_cast<std::size_t>(c1 - c0) * plane; ++i) pg[i] += g[i];
    }
  });
}

VarPtr upsample_nearest(const VarPtr& x, int factor) {
  if (factor < 1) throw InvalidArgumentError("upsample_nearest: factor must be >= 1");
  const auto& v = x->value;
  const int n = v.n(), c = v.c(), h = v.h(), w = v.w();
  Tensor out(n, c, h * factor, w * factor);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int sy = 0; sy < h; ++sy) {
        const double* src = v.ptr(in, ic, sy, 0);
        for (int fy = 0; fy < factor; ++fy) {
          double* dst = out.ptr(in, ic, sy * factor + fy, 0);
          for (int sx = 0; sx < w; ++sx) {
            const double value = src[sx];
            for (int fx = 0; fx < factor; ++fx) dst[sx * factor + fx] = value;
          }
        }
      }
  return make_node(std::move(out), {x}, [factor](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const int n = p->value.n(), c = p->value.c(), h = p->value.h(), w = p->value.w();
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic)
        for (int sy = 0; sy < h; ++sy) {
          double* pg = p->grad.ptr(in, ic, sy, 0);
          for (int fy = 0; fy < factor; ++fy) {
            const double* g = self.grad.ptr(in, ic, sy * factor + fy, 0);
            for (int sx = 0; sx < w; ++sx) {
              double acc = 0.0;
              for (int fx = 0; fx < factor; ++fx) acc += g[sx * factor + fx];
              pg[sx] += acc;
            }
          }
        }
  });
}

VarPtr maxpool2(const VarPtr& x) {
  const auto& v = x->value;
  if (v.h() % 2 != 0 || v.w() % 2 != 0) throw ShapeError("maxpool2: odd spatial size");
  const int n = v.n(), c = v.c(), h = v.h() / 2, w = v.w() / 2;
  Tensor out(n, c, h, w);
  std::vector<std::uint32_t> argmax(out.numel());
  std::size_t oi = 0;
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx, ++oi) {
          double best = -1e300;
          std::uint32_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(in) * c + ic) * (2 * h) + (2 * y + dy)) * (2 * w) +
                  (2 * xx + dx);
              if (v[idx] > best) {
                best = v[idx];
                best_idx = static_cast<std::uint32_t>(idx);
              }
            }
          out[oi] = best;
          argmax[oi] = best_idx;
        }
  return make_node(std::move(out), {x}, [argmax = std::move(argmax)](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[argmax[i]] += g[i];
  });
}

VarPtr global_avg_pool(const VarPtr& x) {
  const auto& v = x->value;
  const int n = v.n(), c = v.c();
  const std::size_t plane = static_cast<std::size_t>(v.h()) * v.w();
  const double inv = 1.0 / static_cast<double>(plane);
  Tensor out(n, c, 1, 1);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double* src = v.ptr(in, ic, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out.at(in, ic, 0, 0) = acc * inv;
    }
  return make_node(std::move(out), {x}, [plane, inv](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const int n = p->value.n(), c = p->value.c();
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const double g = self.grad.at(in, ic, 0, 0) * inv;
        double* pg = p->grad.ptr(in, ic, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) pg[i] += g;
      }
  });
}

// ---- convolution -----------------------------------------------------------

namespace {

// Stride-1 convolutions run as direct shifted-row accumulation: the planes
// stay cache-resident and no patch matrix is materialised. Strided
// convolutions go through im2col + GEMM where the gather cost is amortised.

void conv_s1_forward(const Tensor& x, const Tensor& w, const Tensor& b, int pad, Tensor& out) {
  const int n = x.n(), cin = x.c(), h = x.h(), wd = x.w();
  const int cout = w.n(), kh = w.h(), kw = w.w();
  const int hout = out.h(), wout = out.w();
  for (int in = 0; in < n; ++in) {
    for (int oc = 0; oc < cout; ++oc) {
      double* yp = out.ptr(in, oc);
      const double bias = b[oc];
      for (int i = 0; i < hout * wout; ++i) yp[i] = bias;
    }
    for (int ic = 0; ic < cin; ++ic) {
      const double* xplane = x.ptr(in, ic);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const int ox0 = std::max(0, pad - kx);
          const int ox1 = std::min(wout, wd + pad - kx);
          if (ox1 <= ox0) continue;
          const int len = ox1 - ox0;
          const int oy0 = std::max(0, pad - ky);
          const int oy1 = std::min(hout, h + pad - ky);
          for (int oc = 0; oc < cout; ++oc) {
            const double wv = w.at(oc, ic, ky, kx);
            double* yplane = out.ptr(in, oc);
            for (int oy = oy0; oy < oy1; ++oy) {
              const double* xs = xplane + static_cast<std::size_t>(oy - pad + ky) * wd +
                                 (ox0 - pad + kx);
              double* ys = yplane + static_cast<std::size_t>(oy) * wout + ox0;
              for (int i = 0; i < len; ++i) ys[i] += wv * xs[i];
            }
          }
        }
      }
    }
  }
}

void conv_s1_backward_input(Tensor& dx, const Tensor& w, const Tensor& dy, int pad) {
  const int n = dx.n(), cin = dx.c(), h = dx.h(), wd = dx.w();
  const int cout = w.n(), kh = w.h(), kw = w.w();
  const int hout = dy.h(), wout = dy.w();
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < cin; ++ic) {
      double* dxplane = dx.ptr(in, ic);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const int ox0 = std::max(0, pad - kx);
          const int ox1 = std::min(wout, wd + pad - kx);
          if (ox1 <= ox0) continue;
          const int len = ox1 - ox0;
          const int oy0 = std::max(0, pad - ky);
          const int oy1 = std::min(hout, h + pad - ky);
          for (int oc = 0; oc < cout; ++oc) {
            const double wv = w.at(oc, ic, ky, kx);
            const double* dyplane = dy.ptr(in, oc);
            for (int oy = oy0; oy < oy1; ++oy) {
              double* dxs = dxplane + static_cast<std::size_t>(oy - pad + ky) * wd +
                            (ox0 - pad + kx);
              const double* dys = dyplane + static_cast<std::size_t>(oy) * wout + ox0;
              for (int i = 0; i < len; ++i) dxs[i] += wv * dys[i];
            }
          }
        }
      }
    }
  }
}

void conv_s1_backward_weight(Tensor& dw, const Tensor& x, const Tensor& dy, int pad) {
  const int n = x.n(), cin = x.c(), h = x.h(), wd = x.w();
  const int cout = dw.n(), kh = dw.h(), kw = dw.w();
  const int hout = dy.h(), wout = dy.w();
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < cin; ++ic) {
      const double* xplane = x.ptr(in, ic);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const int ox0 = std::max(0, pad - kx);
          const int ox1 = std::min(wout, wd + pad - kx);
          if (ox1 <= ox0) continue;
          const int len = ox1 - ox0;
          const int oy0 = std::max(0, pad - ky);
          const int oy1 = std::min(hout, h + pad - ky);
          for (int oc = 0; oc < cout; ++oc) {
            const double* dyplane = dy.ptr(in, oc);
            double acc = 0.0;
            for (int oy = oy0; oy < oy1; ++oy) {
              const double* xs = xplane + static_cast<std::size_t>(oy - pad + ky) * wd +
                                 (ox0 - pad + kx);
              const double* dys = dyplane + static_cast<std::size_t>(oy) * wout + ox0;
              acc += Eigen::Map<const Eigen::VectorXd>(xs, len)
                         .dot(Eigen::Map<const Eigen::VectorXd>(dys, len));
            }
            dw.at(oc, ic, ky, kx) += acc;
          }
        }
      }
    }
  }
}

// Output rows per im2col strip, sized to keep the scratch buffer modest.
int strip_rows(std::size_t k, int wout) {
  constexpr std::size_t kBudget = std::size_t(1) << 18; // doubles (~2 MB)
  const std::size_t per_row = k * static_cast<std::size_t>(wout);
  const std::size_t rows = per_row ? std::max<std::size_t>(1, kBudget / per_row) : 1;
  return static_cast<int>(rows);
}

// Gather the patch matrix for output rows [y0, y1) of one sample.
// col is K x P column-major, K = cin*kh*kw, P = (y1-y0)*wout.
void im2col(const Tensor& x, int sample, int kh, int kw, int stride, int pad,
            int wout, int y0, int y1, double* col) {
  const int cin = x.c(), h = x.h(), w = x.w();
  const std::size_t k_total = static_cast<std::size_t>(cin) * kh * kw;
  std::size_t p = 0;
  for (int oy = y0; oy < y1; ++oy) {
    for (int ox = 0; ox < wout; ++ox, ++p) {
      double* dst = col + p * k_total;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (int ic = 0; ic < cin; ++ic) {
        const double* src = x.ptr(sample, ic, 0, 0);
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = iy0 + ky;
          for (int kx = 0; kx < kw; ++kx, ++dst) {
            const int ix = ix0 + kx;
            *dst = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                       ? src[static_cast<std::size_t>(iy) * w + ix]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add the patch matrix back into the input gradient.
void col2im_add(Tensor& dx, int sample, int kh, int kw, int stride, int pad,
                int wout, int y0, int y1, const double* col) {
  const int cin = dx.c(), h = dx.h(), w = dx.w();
  const std::size_t k_total = static_cast<std::size_t>(cin) * kh * kw;
  std::size_t p = 0;
  for (int oy = y0; oy < y1; ++oy) {
    for (int ox = 0; ox < wout; ++ox, ++p) {
      const double* src = col + p * k_total;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (int ic = 0; ic < cin; ++ic) {
        double* dst = dx.ptr(sample, ic, 0, 0);
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = iy0 + ky;
          for (int kx = 0; kx < kw; ++kx, ++src) {
            const int ix = ix0 + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              dst[static_cast<std::size_t>(iy) * w + ix] += *src;
          }
        }
      }
    }
  }
}

} // namespace

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int pad) {
  const auto& xv = x->value;
  const auto& wv = w->value;
  const int cout = wv.n(), cin = wv.c(), kh = wv.h(), kw = wv.w();
  if (xv.c() != cin)
    throw ShapeError("conv2d: input channels " + std::to_string(xv.c()) + " != weight " +
                     std::to_string(cin));
  if (b->value.c() != cout || b->value.numel() != static_cast<std::size_t>(cout))
    throw ShapeError("conv2d: bias shape mismatch");
  if (stride < 1 || pad < 0) throw InvalidArgumentError("conv2d: bad stride/pad");
  const int n = xv.n(), h = xv.h(), wdt = xv.w();
  const int hout = (h + 2 * pad - kh) / stride + 1;
  const int wout = (wdt + 2 * pad - kw) / stride + 1;
  if (hout <= 0 || wout <= 0) throw ShapeError("conv2d: non-positive output size");

  const std::size_t k_total = static_cast<std::size_t>(cin) * kh * kw;
  Tensor out(n, cout, hout, wout);

  if (stride == 1) {
    conv_s1_forward(xv, wv, b->value, pad, out);
  } else {
    const int rows = strip_rows(k_total, wout);
    std::vector<double> col(k_total * static_cast<std::size_t>(rows) * wout);
    CRowMap wmat(wv.data(), cout, static_cast<Eigen::Index>(k_total));
    for (int in = 0; in < n; ++in) {
      for (int y0 = 0; y0 < hout; y0 += rows) {
        const int y1 = std::min(hout, y0 + rows);
        const Eigen::Index p = static_cast<Eigen::Index>(y1 - y0) * wout;
        im2col(xv, in, kh, kw, stride, pad, wout, y0, y1, col.data());
        CColMap cmat(col.data(), static_cast<Eigen::Index>(k_total), p);
        // Output strip viewed as cout x P row-major (channel-major within sample).
        Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>> omat(
            out.ptr(in, 0, y0, 0), cout, p,
            Eigen::OuterStride<>(static_cast<Eigen::Index>(hout) * wout));
        omat.noalias() = wmat * cmat;
      }
      for (int oc = 0; oc < cout; ++oc) {
        const double bias = b->value[oc];
        double* dst = out.ptr(in, oc, 0, 0);
        for (int i = 0; i < hout * wout; ++i) dst[i] += bias;
      }
    }
  }

  auto backward = [stride, pad, cout, cin, kh, kw, hout, wout, k_total](Variable& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    const Tensor& xv = px->value;
    const int n = xv.n();
    const bool need_dx = px->requires_grad;
    const bool need_dw = pw->requires_grad;
    const bool need_db = pb->requires_grad;
    if (need_dx) px->ensure_grad();
    if (need_dw) pw->ensure_grad();
    if (need_db) pb->ensure_grad();

    if (need_db) {
      for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < cout; ++oc) {
          const double* g = self.grad.ptr(in, oc, 0, 0);
          double acc = 0.0;
          for (int i = 0; i < hout * wout; ++i) acc += g[i];
          pb->grad[oc] += acc;
        }
    }
    if (!need_dw && !need_dx) return;

    if (stride == 1) {
      if (need_dx) conv_s1_backward_input(px->grad, pw->value, self.grad, pad);
      if (need_dw) conv_s1_backward_weight(pw->grad, xv, self.grad, pad);
      return;
    }

    const int rows = strip_rows(k_total, wout);
    std::vector<double> col(k_total * static_cast<std::size_t>(rows) * wout);
    std::vector<double> dcol(need_dx ? col.size() : 0);
    CRowMap wmat(pw->value.data(), cout, static_cast<Eigen::Index>(k_total));
    for (int in = 0; in < n; ++in) {
      for (int y0 = 0; y0 < hout; y0 += rows) {
        const int y1 = std::min(hout, y0 + rows);
        const Eigen::Index p = static_cast<Eigen::Index>(y1 - y0) * wout;
        Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>> gmat(
            self.grad.ptr(in, 0, y0, 0), cout, p,
            Eigen::OuterStride<>(static_cast<Eigen::Index>(hout) * wout));
        if (need_dw) {
          im2col(xv, in, kh, kw, stride, pad, wout, y0, y1, col.data());
          CColMap cmat(col.data(), static_cast<Eigen::Index>(k_total), p);
          RowMap dwmat(pw->grad.data(), cout, static_cast<Eigen::Index>(k_total));
          dwmat.noalias() += gmat * cmat.transpose();
        }
        if (need_dx) {
          ColMap dcmat(dcol.data(), static_cast<Eigen::Index>(k_total), p);
          dcmat.noalias() = wmat.transpose() * gmat;
          col2im_add(px->grad, in, kh, kw, stride, pad, wout, y0, y1, dcol.data());
        }
      }
    }
  };
  return make_node(std::move(out), {x, w, b}, std::move(backward));
}

VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
  const auto& xv = x->value;
  const auto& wv = w->value;
  if (xv.h() != 1 || xv.w() != 1) throw ShapeError("linear: expected (N,C,1,1) input");
  const int n = xv.n(), cin = xv.c(), cout = wv.n();
  if (wv.c() != cin || wv.h() != 1 || wv.w() != 1)
    throw ShapeError("linear: weight shape mismatch");
  if (b->value.c() != cout) throw ShapeError("linear: bias shape mismatch");
  Tensor out(n, cout, 1, 1);
  CRowMap xm(xv.data(), n, cin);
  CRowMap wm(wv.data(), cout, cin);
  RowMap om(out.data(), n, cout);
  om.noalias() = xm * wm.transpose();
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < cout; ++oc) out.at(in, oc, 0, 0) += b->value[oc];
  return make_node(std::move(out), {x, w, b}, [n, cin, cout](Variable& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    CRowMap g(self.grad.data(), n, cout);
    if (px->requires_grad) {
      px->ensure_grad();
      RowMap dx(px->grad.data(), n, cin);
      CRowMap wm(pw->value.data(), cout, cin);
      dx.noalias() += g * wm;
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      RowMap dw(pw->grad.data(), cout, cin);
      CRowMap xm(px->value.data(), n, cin);
      dw.noalias() += g.transpose() * xm;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < cout; ++oc) pb->grad[oc] += self.grad.at(in, oc, 0, 0);
    }
  });
}

VarPtr l2_normalize_rows(const VarPtr& x) {
  const auto& v = x->value;
  const int n = v.n();
  const std::size_t row = v.numel() / std::max(1, n);
  Tensor out = v;
  std::vector<double> norms(n);
  for (int in = 0; in < n; ++in) {
    const double* src = v.data() + in * row;
    double acc = 0.0;
    for (std::size_t i = 0; i < row; ++i) acc += src[i] * src[i];
    const double r = std::sqrt(acc);
    if (r == 0.0) throw DegenerateInputError("l2_normalize_rows: zero-norm row");
    norms[in] = r;
    double* dst = out.data() + in * row;
    for (std::size_t i = 0; i < row; ++i) dst[i] /= r;
  }
  Tensor saved = out;
  return make_node(std::move(out), {x},
                   [row, norms = std::move(norms), saved = std::move(saved)](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const int n = p->value.n();
    for (int in = 0; in < n; ++in) {
      const double* g = self.grad.data() + in * row;
      const double* y = saved.data() + in * row;
      double* pg = p->grad.data() + in * row;
      double dot = 0.0;
      for (std::size_t i = 0; i < row; ++i) dot += g[i] * y[i];
      const double inv_r = 1.0 / norms[in];
      for (std::size_t i = 0; i < row; ++i) pg[i] += (g[i] - y[i] * dot) * inv_r;
    }
  });
}

VarPtr flatten_spatial(const VarPtr& x) {
  const auto& v = x->value;
  Tensor out(v.n(), v.c() * v.h() * v.w(), 1, 1);
  std::copy(v.data(), v.data() + v.numel(), out.data());
  return make_node(std::move(out), {x}, [](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    double* pg = p->grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += g[i];
  });
}

VarPtr detach(const VarPtr& x) {
  return Variable::leaf(x->value, false);
}

VarPtr cross_entropy_logits(const VarPtr& logits, const std::vector<int>& labels) {
  const auto& v = logits->value;
  const int n = v.n(), k = v.c();
  if (v.h() != 1 || v.w() != 1) throw ShapeError("cross_entropy_logits: expected (N,K,1,1)");
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("cross_entropy_logits: label count mismatch");
  Tensor softmax(n, k, 1, 1);
  double loss = 0.0;
  for (int in = 0; in < n; ++in) {
    if (labels[in] < 0 || labels[in] >= k)
      throw InvalidArgumentError("cross_entropy_logits: label out of range");
    const double* row = v.ptr(in, 0, 0, 0);
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const double log_denom = std::log(denom) + mx;
    loss += log_denom - row[labels[in]];
    for (int j = 0; j < k; ++j) softmax.at(in, j, 0, 0) = std::exp(row[j] - log_denom);
  }
  loss /= n;
  return make_node(Tensor::scalar(loss), {logits},
                   [labels, softmax = std::move(softmax), n, k](Variable& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0] / n;
    for (int in = 0; in < n; ++in)
      for (int j = 0; j < k; ++j)
        p->grad.at(in, j, 0, 0) +=
            g * (softmax.at(in, j, 0, 0) - (j == labels[in] ? 1.0 : 0.0));
  });
}

} // namespace mdfr::nn
