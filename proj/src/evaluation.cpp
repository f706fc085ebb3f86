#include "mdfr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mdfr::eval {

double psnr(const FaceImage& a, const FaceImage& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow * kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
      w[(y + r) * kSsimWindow + (x + r)] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> to_gray(const FaceImage& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      g[static_cast<std::size_t>(y) * img.width + x] =
          (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
  return g;
}

} // namespace

double ssim(const FaceImage& a, const FaceImage& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.height < kSsimWindow || a.width < kSsimWindow)
    throw InvalidArgumentError("ssim: image smaller than the 11x11 window");
  const auto ga = to_gray(a);
  const auto gb = to_gray(b);
  const auto win = gaussian_window();
  const int h = a.height, w = a.width;
  double total = 0.0;
  long count = 0;
  for (int y = 0; y + kSsimWindow <= h; ++y) {
    for (int x = 0; x + kSsimWindow <= w; ++x) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int dy = 0; dy < kSsimWindow; ++dy)
        for (int dx = 0; dx < kSsimWindow; ++dx) {
          const double wv = win[dy * kSsimWindow + dx];
          const double va = ga[static_cast<std::size_t>(y + dy) * w + (x + dx)];
          const double vb = gb[static_cast<std::size_t>(y + dy) * w + (x + dx)];
          mu_a += wv * va;
          mu_b += wv * vb;
          aa += wv * (va * va);
          bb += wv * (vb * vb);
          ab += wv * (va * vb); // grouped so the metric is bitwise symmetric
        }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double rank1(const LabeledEmbeddings& gallery, const LabeledEmbeddings& probes) {
  if (gallery.size() == 0) throw DataError("rank1: empty gallery");
  if (probes.size() == 0) throw DataError("rank1: empty probe set");
  int correct = 0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    double best = -2.0;
    int best_label = -1;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double s = cosine_similarity(probes.embeddings[p], gallery.embeddings[g]);
      if (s > best) {
        best = s;
        best_label = gallery.labels[g];
      }
    }
    if (best_label == probes.labels[p]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probes.size());
}

double verify_best_accuracy(const std::vector<VerifyPair>& pairs) {
  if (pairs.empty()) throw DataError("verify: empty pair list");
  std::vector<double> sims(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    sims[i] = cosine_similarity(pairs[i].a, pairs[i].b);

  std::vector<double> thresholds = sims;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<double> candidates;
  candidates.push_back(thresholds.front() - 1.0);
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
    candidates.push_back(0.5 * (thresholds[i] + thresholds[i + 1]));
  candidates.push_back(thresholds.back() + 1.0);

  double best = 0.0;
  for (double t : candidates) {
    int correct = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const bool predicted_same = sims[i] > t;
      if (predicted_same == pairs[i].same) ++correct;
    }
    best = std::max(best, static_cast<double>(correct) / static_cast<double>(pairs.size()));
  }
  return best;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "index,psnr_db,ssim\n";
  for (std::size_t i = 0; i < per_pair.size(); ++i) {
    os << i << ",";
    if (std::isinf(per_pair[i].psnr_db)) os << "inf";
    else os << format_double(per_pair[i].psnr_db);
    os << "," << format_double(per_pair[i].ssim_value) << "\n";
  }
  os << "mean," << format_double(mean_psnr) << "," << format_double(mean_ssim) << "\n";
  os << "identical_pairs_excluded," << identical_pairs << ",\n";
  return os.str();
}

MetricReport fidelity_report(const std::vector<FaceImage>& outputs,
                             const std::vector<FaceImage>& references,
                             const std::string& protocol) {
  if (outputs.size() != references.size())
    throw DataError("fidelity_report: output/reference count mismatch");
  MetricReport report;
  report.protocol = protocol;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  int finite = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    PairMetrics m;
    m.psnr_db = psnr(outputs[i], references[i]);
    m.ssim_value = ssim(outputs[i], references[i]);
    if (std::isinf(m.psnr_db)) {
      ++report.identical_pairs;
    } else {
      psnr_sum += m.psnr_db;
      ++finite;
    }
    ssim_sum += m.ssim_value;
    report.per_pair.push_back(m);
  }
  report.mean_psnr = finite > 0 ? psnr_sum / finite : 0.0;
  report.mean_ssim = outputs.empty() ? 0.0 : ssim_sum / static_cast<double>(outputs.size());
  return report;
}

std::vector<PoseBinRow> pose_binned_report(const LabeledEmbeddings& gallery,
                                           const LabeledEmbeddings& probes,
                                           const std::vector<double>& probe_yaws,
                                           const std::vector<double>& bins) {
  if (probe_yaws.size() != probes.size())
    throw DataError("pose_binned_report: yaw list must align with probes");
  std::vector<PoseBinRow> rows;
  for (double bin : bins) {
    LabeledEmbeddings subset;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (std::abs(std::abs(probe_yaws[i]) - bin) < 1e-9) {
        subset.embeddings.push_back(probes.embeddings[i]);
        subset.labels.push_back(probes.labels[i]);
      }
    }
    PoseBinRow row;
    row.abs_yaw = bin;
    row.probe_count = static_cast<int>(subset.size());
    row.rank1_accuracy = subset.size() == 0 ? std::numeric_limits<double>::quiet_NaN()
                                            : rank1(gallery, subset);
    rows.push_back(row);
  }
  return rows;
}

std::string format_pose_table(const std::vector<PoseBinRow>& rows) {
  std::ostringstream os;
  os << "|yaw| ";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8.0f", r.abs_yaw);
    os << buf;
  }
  os << "\nrank1 ";
  for (const auto& r : rows) {
    char buf[32];
    if (std::isnan(r.rank1_accuracy)) std::snprintf(buf, sizeof(buf), "%8s", "-");
    else std::snprintf(buf, sizeof(buf), "%8.4f", r.rank1_accuracy);
    os << buf;
  }
  os << "\ncount ";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8d", r.probe_count);
    os << buf;
  }
  os << "\n";
  return os.str();
}

} // namespace mdfr::eval
