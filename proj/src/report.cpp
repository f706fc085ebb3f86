#include "mdfr/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <fstream>
#include <sstream>

namespace mdfr::harness {

namespace fs = std::filesystem;

namespace {

std::vector<double> embed_of(const critics::Embedder& embedder, const FaceImage& img) {
  return embedder.embed(img).v;
}

} // namespace

std::string RecognitionReport::to_text() const {
  std::ostringstream os;
  os << "recognition protocol: gallery = one frontal view per identity\n";
  os << "probes: " << probe_count << " degraded profile images\n\n";
  os << "raw degraded probes\n" << eval::format_pose_table(raw_bins);
  if (!processed_bins.empty())
    os << "\nrestored+frontalized probes\n" << eval::format_pose_table(processed_bins);
  os << "\nverification best accuracy (degraded pairs): " << format_double(verify_raw) << "\n";
  if (!processed_bins.empty())
    os << "verification best accuracy (restored pairs): " << format_double(verify_processed)
       << "\n";
  return os.str();
}

RecognitionReport recognition_report(const data::Manifest& manifest,
                                     const std::string& corpus_root,
                                     const critics::Embedder& embedder,
                                     const gen::Generator* restorer,
                                     const std::vector<double>& bins,
                                     std::uint64_t pair_seed) {
  RecognitionReport report;

  // Gallery: the frontal render of each identity's yaw-0 record.
  eval::LabeledEmbeddings gallery;
  for (const auto& rec : manifest.records) {
    if (rec.yaw_deg == 0.0) {
      gallery.embeddings.push_back(
          embed_of(embedder, load_png((fs::path(corpus_root) / rec.frontal_path).string())));
      gallery.labels.push_back(rec.identity_id);
    }
  }
  if (gallery.size() == 0) throw DataError("recognition_report: no frontal gallery records");

  eval::LabeledEmbeddings raw_probes, processed_probes;
  std::vector<double> probe_yaws;
  std::vector<std::vector<double>> raw_by_record(manifest.records.size());
  std::vector<std::vector<double>> processed_by_record(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    if (rec.yaw_deg == 0.0) continue;
    const FaceImage lq = load_png((fs::path(corpus_root) / rec.lq_path).string());
    raw_by_record[i] = embed_of(embedder, lq);
    raw_probes.embeddings.push_back(raw_by_record[i]);
    raw_probes.labels.push_back(rec.identity_id);
    probe_yaws.push_back(rec.yaw_deg);
    if (restorer) {
      const FaceImage restored = restorer->restore(lq);
      processed_by_record[i] = embed_of(embedder, restored);
      processed_probes.embeddings.push_back(processed_by_record[i]);
      processed_probes.labels.push_back(rec.identity_id);
    }
  }
  report.probe_count = static_cast<int>(raw_probes.size());
  report.raw_bins = eval::pose_binned_report(gallery, raw_probes, probe_yaws, bins);
  if (restorer)
    report.processed_bins = eval::pose_binned_report(gallery, processed_probes, probe_yaws, bins);

  // Verification pairs: every same-identity cross-pose pair, and an equal
  // number of seeded different-identity pairs.
  std::vector<std::pair<int, int>> same_pairs, diff_pairs;
  std::vector<int> usable;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (!raw_by_record[i].empty()) usable.push_back(static_cast<int>(i));
  for (std::size_t a = 0; a < usable.size(); ++a)
    for (std::size_t b = a + 1; b < usable.size(); ++b)
      if (manifest.records[usable[a]].identity_id == manifest.records[usable[b]].identity_id)
        same_pairs.emplace_back(usable[a], usable[b]);
  RandomStream rng(derive_seed(pair_seed, 0x9A175));
  while (diff_pairs.size() < same_pairs.size() && usable.size() >= 2) {
    const int a = usable[rng.uniform_int(0, static_cast<int>(usable.size()) - 1)];
    const int b = usable[rng.uniform_int(0, static_cast<int>(usable.size()) - 1)];
    if (manifest.records[a].identity_id != manifest.records[b].identity_id)
      diff_pairs.emplace_back(a, b);
  }

  auto build_pairs = [&](const std::vector<std::vector<double>>& by_record) {
    std::vector<eval::VerifyPair> pairs;
    for (const auto& [a, b] : same_pairs) pairs.push_back({by_record[a], by_record[b], true});
    for (const auto& [a, b] : diff_pairs) pairs.push_back({by_record[a], by_record[b], false});
    return pairs;
  };
  if (!same_pairs.empty()) {
    report.verify_raw = eval::verify_best_accuracy(build_pairs(raw_by_record));
    if (restorer) report.verify_processed = eval::verify_best_accuracy(build_pairs(processed_by_record));
  }
  return report;
}

eval::MetricReport corpus_fidelity_report(const data::Manifest& manifest,
                                          const std::string& corpus_root,
                                          const gen::Generator& restorer,
                                          const std::string& protocol) {
  std::vector<FaceImage> outputs, references;
  for (const auto& rec : manifest.records) {
    const FaceImage lq = load_png((fs::path(corpus_root) / rec.lq_path).string());
    outputs.push_back(restorer.restore(lq));
    references.push_back(
        load_png((fs::path(corpus_root) / rec.frontal_path).string()));
  }
  return eval::fidelity_report(outputs, references, protocol);
}

EvalArtifacts run_corpus_eval(const RunConfig& cfg, const data::Manifest& manifest,
                              const critics::Embedder& embedder, const gen::Generator* frn_ti) {
  EvalArtifacts artifacts;
  const fs::path eval_dir = fs::path(cfg.run_dir) / "eval";
  fs::create_directories(eval_dir);

  if (cfg.eval_protocol == "fidelity" || cfg.eval_protocol == "all") {
    if (!frn_ti) throw DataError("fidelity evaluation needs a trained restoration net");
    const auto report =
        corpus_fidelity_report(manifest, cfg.corpus_dir, *frn_ti, "restored-vs-frontal");
    artifacts.metrics_csv_path = (eval_dir / "metrics.csv").string();
    std::ofstream os(artifacts.metrics_csv_path);
    os << report.to_csv();
  }
  if (cfg.eval_protocol == "recognition" || cfg.eval_protocol == "all") {
    std::vector<double> bins;
    for (double p : cfg.data.poses)
      if (p > 0.0) bins.push_back(p);
    std::sort(bins.begin(), bins.end());
    bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
    const auto report =
        recognition_report(manifest, cfg.corpus_dir, embedder, frn_ti, bins);
    artifacts.recognition_txt_path = (eval_dir / "recognition.txt").string();
    std::ofstream os(artifacts.recognition_txt_path);
    os << report.to_text();
  }
  return artifacts;
}

ReportResult make_report(const std::string& run_dir, const std::string& corpus_dir,
                         int max_rows) {
  ReportResult result;
  std::ostringstream os;

  if (!fs::exists(run_dir) || fs::is_empty(run_dir)) {
    result.text = "no results in " + run_dir + "\n";
    return result;
  }

  const fs::path eval_dir = fs::path(run_dir) / "eval";
  for (const char* name : {"metrics.csv", "recognition.txt"}) {
    const fs::path p = eval_dir / name;
    if (fs::exists(p)) {
      std::ifstream is(p);
      os << "==== " << name << " ====\n" << is.rdbuf() << "\n";
      result.has_results = true;
    }
  }

  // Contact sheets when checkpoints and corpus are available.
  const fs::path frn_s_ckpt = fs::path(run_dir) / "frn-s" / "final" / "frn.ckpt";
  const fs::path frn_ti_ckpt = fs::path(run_dir) / "frn-ti" / "final" / "frn.ckpt";
  const fs::path manifest_path = fs::path(corpus_dir) / "manifest.txt";
  if (fs::exists(frn_ti_ckpt) && fs::exists(manifest_path)) {
    const auto manifest = data::load_manifest(manifest_path.string());
    const auto frn_ti = gen::Generator::from_checkpoint(frn_ti_ckpt.string());
    std::unique_ptr<gen::Generator> frn_s;
    if (fs::exists(frn_s_ckpt))
      frn_s = std::make_unique<gen::Generator>(gen::Generator::from_checkpoint(frn_s_ckpt.string()));

    std::vector<FaceImage> rows;
    const int n = std::min<int>(max_rows, static_cast<int>(manifest.records.size()));
    for (int i = 0; i < n; ++i) {
      const auto& rec = manifest.records[i];
      const FaceImage hq = load_png((fs::path(corpus_dir) / rec.hq_path).string());
      const FaceImage lq = load_png((fs::path(corpus_dir) / rec.lq_path).string());
      const FaceImage gt = load_png((fs::path(corpus_dir) / rec.frontal_path).string());
      std::vector<FaceImage> tiles = {hq, lq};
      tiles.push_back(frn_s ? frn_s->restore(lq) : constant_image(hq.height, hq.width, 0.0));
      tiles.push_back(frn_ti.restore(lq));
      tiles.push_back(gt);
      rows.push_back(hconcat_images(tiles));
    }
    if (!rows.empty()) {
      const fs::path report_dir = fs::path(run_dir) / "report";
      fs::create_directories(report_dir);
      const std::string sheet = (report_dir / "contact_sheet.png").string();
      save_png(vconcat_images(rows), sheet);
      result.sheet_paths.push_back(sheet);
      os << "contact sheet: " << sheet
         << " (columns: input | degraded | restored | frontalized | ground truth)\n";
      result.has_results = true;
    }
  }

  if (!result.has_results) {
    result.text = "no results in " + run_dir + "\n";
    return result;
  }
  result.text = os.str();
  return result;
}

} // namespace mdfr::harness
