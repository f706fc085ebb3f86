#include "mdfr/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace mdfr::degradation {

namespace {

double in_range(double v, double lo, double hi, const char* field) {
  if (!(v >= lo && v <= hi))
    throw InvalidArgumentError(std::string("degradation spec: ") + field + " out of range");
  return v;
}

int reflect_index(int i, int n) {
  // Reflection without repeating the border sample (abcb|a pattern collapses
  // to simple mirroring for our kernel radii).
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

double catmull_rom(double t) {
  constexpr double a = -0.5;
  const double at = std::abs(t);
  if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
  if (at < 2.0) return ((a * at - 5.0 * a) * at + 8.0 * a) * at - 4.0 * a;
  return 0.0;
}

} // namespace

std::string blur_kind_name(BlurKind kind) {
  switch (kind) {
    case BlurKind::kGaussian: return "gaussian";
    case BlurKind::kUniform: return "uniform";
    case BlurKind::kAverage: return "average";
  }
  throw InvalidArgumentError("unknown blur kind");
}

BlurKind blur_kind_from_name(const std::string& name) {
  if (name == "gaussian") return BlurKind::kGaussian;
  if (name == "uniform") return BlurKind::kUniform;
  if (name == "average") return BlurKind::kAverage;
  throw InvalidArgumentError("unknown blur kind: " + name);
}

void DegradationSpec::validate() const {
  in_range(color_mean, 0.1, 0.2, "color_mean");
  in_range(color_std, 0.1, 0.2, "color_std");
  in_range(gaussian_blur_mean, 0.1, 0.2, "gaussian_blur_mean");
  in_range(gaussian_blur_std, 0.1, 0.2, "gaussian_blur_std");
  in_range(gamma_low, 0.1, 0.3, "gamma_low");
  in_range(gamma_high, 1.0, 3.0, "gamma_high");
  in_range(noise_mean, 0.1, 0.5, "noise_mean");
  in_range(noise_std, 0.1, 0.5, "noise_std");
  if (downsample_factor < 1)
    throw InvalidArgumentError("degradation spec: downsample_factor must be >= 1");
  if (!(active_color || active_blur || active_gamma || active_downsample || active_noise))
    throw InvalidArgumentError("degradation spec: no active corruption family");
}

std::string DegradationSpec::to_text() const {
  std::ostringstream os;
  os << "color_mean=" << format_double(color_mean) << " color_std=" << format_double(color_std)
     << " blur_kind=" << blur_kind_name(blur_kind)
     << " gaussian_blur_mean=" << format_double(gaussian_blur_mean)
     << " gaussian_blur_std=" << format_double(gaussian_blur_std)
     << " gamma_low=" << format_double(gamma_low) << " gamma_high=" << format_double(gamma_high)
     << " downsample_factor=" << downsample_factor
     << " noise_mean=" << format_double(noise_mean) << " noise_std=" << format_double(noise_std)
     << " active=";
  bool first = true;
  auto emit = [&](bool on, const char* name) {
    if (!on) return;
    if (!first) os << ",";
    os << name;
    first = false;
  };
  emit(active_color, "color");
  emit(active_blur, "blur");
  emit(active_gamma, "gamma");
  emit(active_downsample, "downsample");
  emit(active_noise, "noise");
  os << " seed=" << seed;
  return os.str();
}

DegradationSpec DegradationSpec::from_text(const std::string& text) {
  DegradationSpec spec;
  spec.active_color = spec.active_blur = spec.active_gamma = spec.active_downsample =
      spec.active_noise = false;
  std::istringstream is(text);
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw DataError("malformed spec token: " + token);
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "color_mean") spec.color_mean = std::stod(value);
    else if (key == "color_std") spec.color_std = std::stod(value);
    else if (key == "blur_kind") spec.blur_kind = blur_kind_from_name(value);
    else if (key == "gaussian_blur_mean") spec.gaussian_blur_mean = std::stod(value);
    else if (key == "gaussian_blur_std") spec.gaussian_blur_std = std::stod(value);
    else if (key == "gamma_low") spec.gamma_low = std::stod(value);
    else if (key == "gamma_high") spec.gamma_high = std::stod(value);
    else if (key == "downsample_factor") spec.downsample_factor = std::stoi(value);
    else if (key == "noise_mean") spec.noise_mean = std::stod(value);
    else if (key == "noise_std") spec.noise_std = std::stod(value);
    else if (key == "seed") spec.seed = std::stoull(value);
    else if (key == "active") {
      std::istringstream fams(value);
      std::string fam;
      while (std::getline(fams, fam, ',')) {
        if (fam == "color") spec.active_color = true;
        else if (fam == "blur") spec.active_blur = true;
        else if (fam == "gamma") spec.active_gamma = true;
        else if (fam == "downsample") spec.active_downsample = true;
        else if (fam == "noise") spec.active_noise = true;
        else throw DataError("unknown corruption family: " + fam);
      }
    } else {
      throw DataError("unknown spec key: " + key);
    }
  }
  spec.validate();
  return spec;
}

DegradationSpec sample_spec(std::uint64_t rng_seed) {
  RandomStream rng(derive_seed(rng_seed, 0xDE6));
  DegradationSpec spec;
  spec.seed = rng_seed;
  spec.color_mean = rng.uniform(0.1, 0.2);
  spec.color_std = rng.uniform(0.1, 0.2);
  spec.blur_kind = static_cast<BlurKind>(rng.uniform_int(0, 2));
  spec.gaussian_blur_mean = rng.uniform(0.1, 0.2);
  spec.gaussian_blur_std = rng.uniform(0.1, 0.2);
  spec.gamma_low = rng.uniform(0.1, 0.3);
  spec.gamma_high = rng.uniform(1.0, 3.0);
  spec.downsample_factor = rng.uniform_int(0, 1) == 0 ? 2 : 4;
  spec.noise_mean = rng.uniform(0.1, 0.5);
  spec.noise_std = rng.uniform(0.1, 0.5);
  // Each family is active independently; redraw until at least one is on so
  // multi-factor overlap occurs.
  do {
    spec.active_color = rng.uniform() < 0.5;
    spec.active_blur = rng.uniform() < 0.5;
    spec.active_gamma = rng.uniform() < 0.5;
    spec.active_downsample = rng.uniform() < 0.5;
    spec.active_noise = rng.uniform() < 0.5;
  } while (!(spec.active_color || spec.active_blur || spec.active_gamma ||
             spec.active_downsample || spec.active_noise));
  spec.validate();
  return spec;
}

FaceImage color_warp(const FaceImage& img, double mean, double stddev, std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, 0xC0102));
  double shift[3];
  for (double& s : shift) s = rng.normal(mean, stddev);
  FaceImage out = img;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = std::clamp(out.at(y, x, c) + shift[c], 0.0, 1.0);
  return out;
}

FaceImage blur(const FaceImage& img, BlurKind kind, int ksize, double sigma) {
  if (ksize < 1 || ksize % 2 == 0)
    throw InvalidArgumentError("blur: kernel size must be odd and >= 1");
  if (kind == BlurKind::kGaussian && !(sigma > 0.0))
    throw InvalidArgumentError("blur: gaussian sigma must be positive");
  const int r = ksize / 2;
  std::vector<double> kernel(static_cast<std::size_t>(ksize) * ksize, 1.0);
  if (kind == BlurKind::kGaussian) {
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        kernel[(dy + r) * ksize + (dx + r)] = std::exp(-(dx * dx + dy * dy) * inv2s2);
  }
  double kernel_sum = 0.0;
  for (double k : kernel) kernel_sum += k;

  FaceImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect_index(y + dy, img.height);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = reflect_index(x + dx, img.width);
            acc += kernel[(dy + r) * ksize + (dx + r)] * img.at(yy, xx, c);
          }
        }
        out.at(y, x, c) = acc / kernel_sum;
      }
  return out;
}

FaceImage gamma_adjust(const FaceImage& img, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgumentError("gamma_adjust: gamma must be positive");
  FaceImage out = img;
  for (auto& v : out.pixels) v = std::pow(v, gamma);
  return out;
}

void resize_bicubic_plane(const double* src, int src_h, int src_w, double* dst, int dst_h,
                          int dst_w) {
  const double sy = static_cast<double>(src_h) / dst_h;
  const double sx = static_cast<double>(src_w) / dst_w;
  // Tap indices and kernel weights per output column, computed once.
  std::vector<int> xi(static_cast<std::size_t>(dst_w) * 4);
  std::vector<double> xw(static_cast<std::size_t>(dst_w) * 4);
  for (int ox = 0; ox < dst_w; ++ox) {
    const double fx = (ox + 0.5) * sx - 0.5;
    const int ix = static_cast<int>(std::floor(fx));
    const double tx = fx - ix;
    for (int k = 0; k < 4; ++k) {
      xi[ox * 4 + k] = std::clamp(ix - 1 + k, 0, src_w - 1);
      xw[ox * 4 + k] = catmull_rom(tx - (k - 1));
    }
  }
  for (int oy = 0; oy < dst_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const double ty = fy - iy;
    double wy[4];
    const double* rows[4];
    for (int k = 0; k < 4; ++k) {
      wy[k] = catmull_rom(ty - (k - 1));
      rows[k] = src + static_cast<std::size_t>(std::clamp(iy - 1 + k, 0, src_h - 1)) * src_w;
    }
    double* out_row = dst + static_cast<std::size_t>(oy) * dst_w;
    for (int ox = 0; ox < dst_w; ++ox) {
      const int* ti = &xi[ox * 4];
      const double* tw = &xw[ox * 4];
      double acc = 0.0;
      for (int ky = 0; ky < 4; ++ky) {
        const double* row = rows[ky];
        acc += wy[ky] * (tw[0] * row[ti[0]] + tw[1] * row[ti[1]] + tw[2] * row[ti[2]] +
                         tw[3] * row[ti[3]]);
      }
      out_row[ox] = acc;
    }
  }
}

namespace {

FaceImage resize_bicubic(const FaceImage& img, int out_h, int out_w) {
  FaceImage out(out_h, out_w);
  std::vector<double> src_plane(static_cast<std::size_t>(img.height) * img.width);
  std::vector<double> dst_plane(static_cast<std::size_t>(out_h) * out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        src_plane[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
    resize_bicubic_plane(src_plane.data(), img.height, img.width, dst_plane.data(), out_h,
                         out_w);
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        out.at(y, x, c) = std::clamp(dst_plane[static_cast<std::size_t>(y) * out_w + x], 0.0, 1.0);
  }
  return out;
}

} // namespace

FaceImage downsample_bicubic(const FaceImage& img, int factor) {
  if (factor < 1) throw InvalidArgumentError("downsample_bicubic: factor must be >= 1");
  if (img.height % factor != 0 || img.width % factor != 0)
    throw InvalidArgumentError("downsample_bicubic: factor must divide image size");
  if (factor == 1) return img;
  return resize_bicubic(img, img.height / factor, img.width / factor);
}

FaceImage upsample_bicubic(const FaceImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidArgumentError("upsample_bicubic: bad target size");
  if (out_h == img.height && out_w == img.width) return img;
  return resize_bicubic(img, out_h, out_w);
}

FaceImage add_gaussian_noise(const FaceImage& img, double mean, double stddev,
                             std::uint64_t seed) {
  if (stddev < 0.0) throw InvalidArgumentError("add_gaussian_noise: negative std");
  RandomStream rng(derive_seed(seed, 0x401E));
  FaceImage out = img;
  for (auto& v : out.pixels) v = std::clamp(v + rng.normal(mean, stddev), 0.0, 1.0);
  return out;
}

int blur_kernel_size(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return 2 * r + 1;
}

FaceImage degrade(const FaceImage& img, const DegradationSpec& spec,
                  const DegradeOptions& opts) {
  spec.validate();
  FaceImage out = img;
  if (spec.active_color)
    out = color_warp(out, spec.color_mean, spec.color_std, derive_seed(spec.seed, 1));
  if (spec.active_blur) {
    const double sigma = spec.gaussian_blur_std * opts.blur_sigma_scale;
    out = blur(out, spec.blur_kind, blur_kernel_size(sigma), sigma);
  }
  if (spec.active_gamma) {
    RandomStream rng(derive_seed(spec.seed, 3));
    out = gamma_adjust(out, rng.uniform(spec.gamma_low, spec.gamma_high));
  }
  if (spec.active_downsample && spec.downsample_factor > 1) {
    const int h = out.height, w = out.width;
    out = downsample_bicubic(out, spec.downsample_factor);
    out = upsample_bicubic(out, h, w);
  }
  if (spec.active_noise)
    out = add_gaussian_noise(out, spec.noise_mean, spec.noise_std, derive_seed(spec.seed, 5));
  return out;
}

} // namespace mdfr::degradation
