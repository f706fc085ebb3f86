#pragma once

#include "mdfr/config.hpp"
#include "mdfr/evaluation.hpp"

namespace mdfr::harness {

// Desk-scale recognition protocol: one frontal view per identity forms the
// gallery; degraded profiles are probed raw and after restoration through a
// trained net. Verification sweeps same/different pairs the same way.
struct RecognitionReport {
  std::vector<eval::PoseBinRow> raw_bins;
  std::vector<eval::PoseBinRow> processed_bins;
  double verify_raw = 0.0;
  double verify_processed = 0.0;
  int probe_count = 0;

  std::string to_text() const;
};

RecognitionReport recognition_report(const data::Manifest& manifest,
                                     const std::string& corpus_root,
                                     const critics::Embedder& embedder,
                                     const gen::Generator* restorer,
                                     const std::vector<double>& bins,
                                     std::uint64_t pair_seed = 7);

// Fidelity protocol over the corpus: restored degraded images scored against
// their clean references.
eval::MetricReport corpus_fidelity_report(const data::Manifest& manifest,
                                          const std::string& corpus_root,
                                          const gen::Generator& restorer,
                                          const std::string& protocol);

struct EvalArtifacts {
  std::string metrics_csv_path;
  std::string recognition_txt_path;
};

// Runs the selected protocols and writes artifacts under <run_dir>/eval/.
EvalArtifacts run_corpus_eval(const RunConfig& cfg, const data::Manifest& manifest,
                              const critics::Embedder& embedder, const gen::Generator* frn_ti);

struct ReportResult {
  bool has_results = false;
  std::string text;
  std::vector<std::string> sheet_paths;
};

// Human-readable run summary: metric tables plus contact sheets
// (input | degraded | restored | frontalized | ground truth).
ReportResult make_report(const std::string& run_dir, const std::string& corpus_dir,
                         int max_rows = 8);

} // namespace mdfr::harness
