#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mdfr/image.hpp"

namespace mdfr::eval {

// Peak signal-to-noise ratio in dB against peak 1.0; identical images give
// +infinity (reported as "inf" and excluded from averages).
double psnr(const FaceImage& a, const FaceImage& b);

// Structural similarity on the channel-mean grayscale image: 11x11 Gaussian
// window (sigma 1.5), stabilisers C1=(0.01)^2, C2=(0.03)^2, averaged over all
// fully interior windows.
double ssim(const FaceImage& a, const FaceImage& b);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct LabeledEmbeddings {
  std::vector<std::vector<double>> embeddings;
  std::vector<int> labels;

  std::size_t size() const { return embeddings.size(); }
};

// Fraction of probes whose nearest gallery embedding (cosine) shares the label.
double rank1(const LabeledEmbeddings& gallery, const LabeledEmbeddings& probes);

struct VerifyPair {
  std::vector<double> a, b;
  bool same = false;
};

// Best accuracy over a full cosine-threshold sweep.
double verify_best_accuracy(const std::vector<VerifyPair>& pairs);

struct PairMetrics {
  double psnr_db = 0.0;
  double ssim_value = 0.0;
};

struct MetricReport {
  std::string protocol;
  std::vector<PairMetrics> per_pair;
  double mean_psnr = 0.0; // over finite entries
  double mean_ssim = 0.0;
  int identical_pairs = 0; // psnr = inf, excluded from the mean

  std::string to_csv() const;
};

MetricReport fidelity_report(const std::vector<FaceImage>& outputs,
                             const std::vector<FaceImage>& references,
                             const std::string& protocol);

struct PoseBinRow {
  double abs_yaw = 0.0;
  int probe_count = 0;
  double rank1_accuracy = 0.0; // NaN when the bin is empty
};

// Rank-1 per |yaw| bin; `probe_yaws` aligns with the probe embeddings.
std::vector<PoseBinRow> pose_binned_report(const LabeledEmbeddings& gallery,
                                           const LabeledEmbeddings& probes,
                                           const std::vector<double>& probe_yaws,
                                           const std::vector<double>& bins);

std::string format_pose_table(const std::vector<PoseBinRow>& rows);

} // namespace mdfr::eval
