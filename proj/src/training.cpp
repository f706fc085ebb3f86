#include "mdfr/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mdfr::training {

namespace fs = std::filesystem;

void PhaseConfig::validate() const {
  if (phase != "frn-s" && phase != "ffn-s" && phase != "frn-ti")
    throw ValidationError("phase must be one of frn-s, ffn-s, frn-ti");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  for (double lr : {lr_frn, lr_ffn, lr_pcd, lr_icd})
    if (!(lr > 0.0)) throw ValidationError("learning rates must be positive");
  weights.validate();
  if (max_steps < 0) throw ValidationError("max_steps must be non-negative");
  if (checkpoint_interval < 0) throw ValidationError("checkpoint_interval must be non-negative");
  if (!(grad_clip > 0.0)) throw ValidationError("grad_clip must be positive");
  if (!(heatmap_sigma > 0.0)) throw ValidationError("heatmap_sigma must be positive");
}

std::map<std::string, std::string> PhaseConfig::to_kv() const {
  return {{"phase", phase},
          {"batch_size", std::to_string(batch_size)},
          {"lr_frn", format_double(lr_frn)},
          {"lr_ffn", format_double(lr_ffn)},
          {"lr_pcd", format_double(lr_pcd)},
          {"lr_icd", format_double(lr_icd)},
          {"lambda1", format_double(weights.lambda1)},
          {"lambda2", format_double(weights.lambda2)},
          {"lambda3", format_double(weights.lambda3)},
          {"lambda4", format_double(weights.lambda4)},
          {"lambda5", format_double(weights.lambda5)},
          {"max_steps", std::to_string(max_steps)},
          {"seed", std::to_string(seed)},
          {"checkpoint_interval", std::to_string(checkpoint_interval)},
          {"grad_clip", format_double(grad_clip)},
          {"adam_beta1", format_double(adam_beta1)},
          {"adam_beta2", format_double(adam_beta2)},
          {"non_saturating_g", non_saturating_g ? "1" : "0"},
          {"heatmap_sigma", format_double(heatmap_sigma)},
          {"stop_component", stop_component},
          {"stop_threshold", format_double(stop_threshold)}};
}

PhaseConfig PhaseConfig::from_kv(const std::map<std::string, std::string>& kv) {
  PhaseConfig cfg;
  cfg.phase = kv.at("phase");
  cfg.batch_size = std::stoi(kv.at("batch_size"));
  cfg.lr_frn = std::stod(kv.at("lr_frn"));
  cfg.lr_ffn = std::stod(kv.at("lr_ffn"));
  cfg.lr_pcd = std::stod(kv.at("lr_pcd"));
  cfg.lr_icd = std::stod(kv.at("lr_icd"));
  cfg.weights.lambda1 = std::stod(kv.at("lambda1"));
  cfg.weights.lambda2 = std::stod(kv.at("lambda2"));
  cfg.weights.lambda3 = std::stod(kv.at("lambda3"));
  cfg.weights.lambda4 = std::stod(kv.at("lambda4"));
  cfg.weights.lambda5 = std::stod(kv.at("lambda5"));
  cfg.max_steps = std::stoi(kv.at("max_steps"));
  cfg.seed = std::stoull(kv.at("seed"));
  cfg.checkpoint_interval = std::stoi(kv.at("checkpoint_interval"));
  cfg.grad_clip = std::stod(kv.at("grad_clip"));
  cfg.adam_beta1 = std::stod(kv.at("adam_beta1"));
  cfg.adam_beta2 = std::stod(kv.at("adam_beta2"));
  cfg.non_saturating_g = kv.at("non_saturating_g") == "1";
  cfg.heatmap_sigma = std::stod(kv.at("heatmap_sigma"));
  if (kv.count("stop_component")) cfg.stop_component = kv.at("stop_component");
  if (kv.count("stop_threshold")) cfg.stop_threshold = std::stod(kv.at("stop_threshold"));
  cfg.validate();
  return cfg;
}

double StepLogEntry::component(const std::string& name) const {
  for (const auto& [k, v] : components)
    if (k == name) return v;
  throw InvalidArgumentError("log entry has no component " + name);
}

TrainingLog::TrainingLog(const std::string& path) : path_(path) {
  if (!path_.empty()) {
    fs::create_directories(fs::path(path_).parent_path());
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw IoError("cannot open training log: " + path_);
  }
}

void TrainingLog::append(const StepLogEntry& entry) {
  entries_.push_back(entry);
  if (path_.empty()) return;
  std::ofstream os(path_, std::ios::app);
  os << "step=" << entry.step << " phase=" << entry.phase;
  for (const auto& [k, v] : entry.components) os << " " << k << "=" << format_double(v);
  os << " total=" << format_double(entry.total) << " clipped=" << (entry.clipped ? 1 : 0)
     << "\n";
}

// ---- dataset adapters ---------------------------------------------------------

std::vector<RestorationSample> restoration_samples(const data::Manifest& manifest,
                                                   const std::string& corpus_root) {
  std::vector<int> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto batch = data::load_batch(manifest, corpus_root, all, data::Phase::kFrnS);
  std::vector<RestorationSample> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    out[i] = {std::move(batch.low[i]), std::move(batch.high[i])};
  return out;
}

std::vector<FrontalizationSample> frontalization_samples(const data::Manifest& manifest,
                                                         const std::string& corpus_root) {
  std::vector<int> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto batch = data::load_batch(manifest, corpus_root, all, data::Phase::kFfnS);
  std::vector<FrontalizationSample> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    out[i] = {std::move(batch.high[i]), std::move(batch.target[i]), batch.lp[i], batch.lt[i]};
  return out;
}

std::vector<TiSample> ti_samples(const data::Manifest& manifest, const std::string& corpus_root) {
  std::vector<int> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto batch = data::load_batch(manifest, corpus_root, all, data::Phase::kFrnTi);
  std::vector<TiSample> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    out[i] = {std::move(batch.low[i]), std::move(batch.high[i]), batch.lp[i], batch.rigid[i],
              batch.coeffs[i]};
  return out;
}

nn::AdamOptimizer make_optimizer(nn::ParamStore& params, double lr, const PhaseConfig& cfg) {
  return nn::AdamOptimizer(params, lr, cfg.adam_beta1, cfg.adam_beta2);
}

bool is_frozen(const nn::ParamStore& params) {
  for (const auto& [name, var] : params.entries())
    if (var->requires_grad) return false;
  return true;
}

// ---- shared helpers -------------------------------------------------------------

namespace {

void require_frozen_embedder(const critics::Embedder& embedder) {
  if (!is_frozen(embedder.params()))
    throw InvalidArgumentError("training requires a frozen identity embedder");
}

std::vector<int> draw_indices(RandomStream& rng, int pool, int count) {
  std::vector<int> idx(count);
  for (int& i : idx) i = rng.uniform_int(0, pool - 1);
  return idx;
}

void check_finite_loss(double value, const char* phase, int step,
                       const std::vector<std::pair<std::string, double>>& components) {
  if (std::isfinite(value)) return;
  std::ostringstream os;
  os << phase << ": non-finite loss at step " << step << " (";
  for (const auto& [k, v] : components) os << k << "=" << v << " ";
  os << ")";
  throw TrainingDiverged(os.str());
}

void write_phase_snapshot(const std::string& dir, const PhaseConfig& cfg,
                          const std::string& rng_state) {
  fs::create_directories(dir);
  std::ofstream os(fs::path(dir) / "phase_config.txt");
  for (const auto& [k, v] : cfg.to_kv()) os << k << "=" << v << "\n";
  std::ofstream rs(fs::path(dir) / "rng_state.txt");
  rs << rng_state << "\n";
}

nn::Tensor heatmap_batch(const std::vector<geometry::LandmarkSet>& lms, int size, double sigma) {
  std::vector<geometry::HeatmapStack> stacks;
  stacks.reserve(lms.size());
  for (const auto& lm : lms) stacks.push_back(geometry::encode_heatmaps(lm, size, size, sigma));
  return nn::batch_heatmaps(stacks);
}

} // namespace

// ---- phase 1: restoration ------------------------------------------------------

gen::Generator train_frn_s(const PhaseConfig& cfg, const std::vector<RestorationSample>& samples,
                           const critics::Embedder& embedder, const gen::GeneratorConfig& gen_cfg,
                           const std::string& run_dir, TrainingLog* log) {
  cfg.validate();
  require_frozen_embedder(embedder);
  if (samples.empty()) throw DataError("train_frn_s: empty dataset");

  gen::Generator frn(gen::Role::kFRN, gen_cfg, cfg.seed);
  nn::AdamOptimizer opt = make_optimizer(frn.params(), cfg.lr_frn, cfg);
  RandomStream batch_rng(derive_seed(cfg.seed, 0xBA7C1));

  for (int step = 0; step < cfg.max_steps; ++step) {
    const auto idx = draw_indices(batch_rng, static_cast<int>(samples.size()), cfg.batch_size);
    std::vector<FaceImage> lows, highs;
    for (int i : idx) {
      lows.push_back(samples[i].low);
      highs.push_back(samples[i].high);
    }
    auto low = nn::Variable::leaf(nn::batch_images(lows));
    auto high = nn::Variable::leaf(nn::batch_images(highs));

    auto restored = frn.restore_var(low);
    auto emb_high = embedder.embed_var(high);
    auto emb_out = embedder.embed_var(restored.image);
    auto l_r = losses::loss_pixel(high, restored.image);
    auto l_id = losses::loss_id(emb_high, emb_out);
    auto total = nn::add(l_r, nn::affine(l_id, cfg.weights.lambda1, 0.0));

    StepLogEntry entry;
    entry.step = step;
    entry.phase = cfg.phase;
    entry.components = {{"l_r", l_r->value.item()}, {"l_id", l_id->value.item()}};
    entry.total = total->value.item();
    check_finite_loss(entry.total, "frn-s", step, entry.components);

    opt.zero_grads();
    nn::backward(total);
    entry.clipped = nn::clip_global_grad_norm(frn.params(), cfg.grad_clip) > cfg.grad_clip;
    opt.step();
    if (log) log->append(entry);
    if (!cfg.stop_component.empty() && entry.component(cfg.stop_component) <= cfg.stop_threshold)
      break;

    if (!run_dir.empty() && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      const std::string dir = (fs::path(run_dir) / "frn-s" / std::to_string(step + 1)).string();
      write_phase_snapshot(dir, cfg, batch_rng.state_string());
      frn.save((fs::path(dir) / "frn.ckpt").string());
    }
  }

  if (!run_dir.empty()) {
    const std::string dir = (fs::path(run_dir) / "frn-s" / "final").string();
    write_phase_snapshot(dir, cfg, batch_rng.state_string());
    frn.save((fs::path(dir) / "frn.ckpt").string());
  }
  return frn;
}

// ---- phase 2: frontalization with conditioned critics ---------------------------

FfnTrainResult train_ffn_s(const PhaseConfig& cfg,
                           const std::vector<FrontalizationSample>& samples,
                           const critics::Embedder& embedder, const gen::GeneratorConfig& gen_cfg,
                           int critic_base_channels, const std::string& run_dir,
                           TrainingLog* log) {
  cfg.validate();
  require_frozen_embedder(embedder);
  if (samples.empty()) throw DataError("train_ffn_s: empty dataset");

  critics::CriticConfig pcd_cfg;
  pcd_cfg.image_size = gen_cfg.image_size;
  pcd_cfg.base_channels = critic_base_channels;
  pcd_cfg.condition_channels = geometry::kNumKeypoints;
  critics::CriticConfig icd_cfg = pcd_cfg;
  icd_cfg.condition_channels = embedder.config().feature_channels();

  FfnTrainResult result{gen::Generator(gen::Role::kFFN, gen_cfg, cfg.seed),
                        critics::Critic(critics::CriticRole::kPCD, pcd_cfg, cfg.seed),
                        critics::Critic(critics::CriticRole::kICD, icd_cfg, cfg.seed)};
  gen::Generator& ffn = result.ffn;
  critics::Critic& pcd = result.pcd;
  critics::Critic& icd = result.icd;

  nn::AdamOptimizer opt_g = make_optimizer(ffn.params(), cfg.lr_ffn, cfg);
  nn::AdamOptimizer opt_pcd = make_optimizer(pcd.params(), cfg.lr_pcd, cfg);
  nn::AdamOptimizer opt_icd = make_optimizer(icd.params(), cfg.lr_icd, cfg);
  RandomStream batch_rng(derive_seed(cfg.seed, 0xBA7C2));
  const int size = gen_cfg.image_size;

  for (int step = 0; step < cfg.max_steps; ++step) {
    const auto idx = draw_indices(batch_rng, static_cast<int>(samples.size()), cfg.batch_size);
    std::vector<FaceImage> profiles, targets;
    std::vector<geometry::LandmarkSet> lps, lts;
    for (int i : idx) {
      profiles.push_back(samples[i].profile);
      targets.push_back(samples[i].target);
      lps.push_back(samples[i].lp);
      lts.push_back(samples[i].lt);
    }
    auto profile = nn::Variable::leaf(nn::batch_images(profiles));
    auto target = nn::Variable::leaf(nn::batch_images(targets));
    auto hm_lp = nn::Variable::leaf(heatmap_batch(lps, size, cfg.heatmap_sigma));
    auto hm_lt = nn::Variable::leaf(heatmap_batch(lts, size, cfg.heatmap_sigma));

    // Identity feature map of the target conditions the ICD.
    auto p_t = nn::detach(embedder.feature_map_var(target));
    nn::Tensor p_t_resized(p_t->value.n(), p_t->value.c(), size, size);
    for (int n = 0; n < p_t->value.n(); ++n)
      for (int c = 0; c < p_t->value.c(); ++c)
        degradation::resize_bicubic_plane(p_t->value.ptr(n, c), p_t->value.h(), p_t->value.w(),
                                          p_t_resized.ptr(n, c), size, size);
    auto cond_icd = nn::Variable::leaf(std::move(p_t_resized));

    // Generator forward once; the critic update sees it detached.
    auto fake = ffn.frontalize_var(profile, hm_lp, hm_lt);
    auto fake_detached = nn::detach(fake.image);

    // Critic update: ascend log D(real) + log(1 - D(fake)).
    auto s_real_pcd = pcd.score_var(target, hm_lt);
    auto s_fake_pcd = pcd.score_var(fake_detached, hm_lt);
    auto s_real_icd = icd.score_var(target, cond_icd);
    auto s_fake_icd = icd.score_var(fake_detached, cond_icd);
    auto obj_pcd = losses::loss_adv_d(s_real_pcd, s_fake_pcd);
    auto obj_icd = losses::loss_adv_d(s_real_icd, s_fake_icd);
    auto critic_loss = nn::affine(nn::add(obj_pcd, obj_icd), -1.0, 0.0);
    opt_pcd.zero_grads();
    opt_icd.zero_grads();
    nn::backward(critic_loss);
    nn::clip_global_grad_norm(pcd.params(), cfg.grad_clip);
    nn::clip_global_grad_norm(icd.params(), cfg.grad_clip);
    opt_pcd.step();
    opt_icd.step();

    // Generator update against the refreshed critics. Critic weights carry
    // no gradient here; only the path back into the generator is needed.
    pcd.params().set_requires_grad(false);
    icd.params().set_requires_grad(false);
    auto s_g_pcd = pcd.score_var(fake.image, hm_lt);
    auto s_g_icd = icd.score_var(fake.image, cond_icd);
    auto emb_target = embedder.embed_var(target);
    auto emb_fake = embedder.embed_var(fake.image);
    auto l_f = losses::loss_pixel(target, fake.image);
    auto l_id = losses::loss_id(emb_target, emb_fake);
    auto l_adv = nn::add(losses::loss_adv_g(s_g_pcd, cfg.non_saturating_g),
                         losses::loss_adv_g(s_g_icd, cfg.non_saturating_g));
    auto total = nn::add(nn::add(l_f, nn::affine(l_id, cfg.weights.lambda2, 0.0)),
                         nn::affine(l_adv, cfg.weights.lambda3, 0.0));

    StepLogEntry entry;
    entry.step = step;
    entry.phase = cfg.phase;
    entry.components = {{"l_f", l_f->value.item()},
                        {"l_id", l_id->value.item()},
                        {"l_adv_g", l_adv->value.item()},
                        {"obj_pcd", obj_pcd->value.item()},
                        {"obj_icd", obj_icd->value.item()}};
    entry.total = total->value.item();
    check_finite_loss(entry.total, "ffn-s", step, entry.components);

    opt_g.zero_grads();
    nn::backward(total);
    entry.clipped = nn::clip_global_grad_norm(ffn.params(), cfg.grad_clip) > cfg.grad_clip;
    opt_g.step();
    pcd.params().set_requires_grad(true);
    icd.params().set_requires_grad(true);
    if (log) log->append(entry);
    if (!cfg.stop_component.empty() && entry.component(cfg.stop_component) <= cfg.stop_threshold)
      break;

    if (!run_dir.empty() && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      const std::string dir = (fs::path(run_dir) / "ffn-s" / std::to_string(step + 1)).string();
      write_phase_snapshot(dir, cfg, batch_rng.state_string());
      ffn.save((fs::path(dir) / "ffn.ckpt").string());
      pcd.save((fs::path(dir) / "pcd.ckpt").string());
      icd.save((fs::path(dir) / "icd.ckpt").string());
    }
  }

  if (!run_dir.empty()) {
    const std::string dir = (fs::path(run_dir) / "ffn-s" / "final").string();
    write_phase_snapshot(dir, cfg, batch_rng.state_string());
    ffn.save((fs::path(dir) / "ffn.ckpt").string());
    pcd.save((fs::path(dir) / "pcd.ckpt").string());
    icd.save((fs::path(dir) / "icd.ckpt").string());
  }
  return result;
}

// ---- task-integrated phase -------------------------------------------------------

gen::Generator train_frn_ti(const PhaseConfig& cfg, const std::vector<TiSample>& samples,
                            const geometry::MorphableBasis& basis, gen::Generator frn,
                            const gen::Generator& ffn_frozen, const critics::Embedder& embedder,
                            const std::string& run_dir, TrainingLog* log) {
  cfg.validate();
  require_frozen_embedder(embedder);
  if (!is_frozen(ffn_frozen.params()))
    throw InvalidArgumentError("train_frn_ti: the teacher net must be frozen");
  if (ffn_frozen.role() != gen::Role::kFFN)
    throw InvalidArgumentError("train_frn_ti: the teacher must be the frontalization net");
  if (samples.empty()) throw DataError("train_frn_ti: empty dataset");

  nn::AdamOptimizer opt = make_optimizer(frn.params(), cfg.lr_frn, cfg);
  RandomStream batch_rng(derive_seed(cfg.seed, 0xBA7C3));
  const int size = frn.config().image_size;

  for (int step = 0; step < cfg.max_steps; ++step) {
    const auto idx = draw_indices(batch_rng, static_cast<int>(samples.size()), cfg.batch_size);
    std::vector<FaceImage> lows, highs;
    std::vector<geometry::LandmarkSet> lps, lfs;
    for (int i : idx) {
      const auto& s = samples[i];
      lows.push_back(s.low);
      highs.push_back(s.high);
      lps.push_back(s.lp);
      // Pose normalisation supplies the real-frontal landmarks.
      const auto shape = geometry::assemble_shape(basis, s.coeffs);
      lfs.push_back(
          geometry::sample_keypoints(geometry::normalize_frontal(shape, s.rigid), basis));
    }
    auto low = nn::Variable::leaf(nn::batch_images(lows));
    auto high = nn::Variable::leaf(nn::batch_images(highs));
    auto hm_lp = nn::Variable::leaf(heatmap_batch(lps, size, cfg.heatmap_sigma));
    auto hm_lf = nn::Variable::leaf(heatmap_batch(lfs, size, cfg.heatmap_sigma));

    // Teacher pass (frozen, so no gradient graph is built).
    auto teacher = ffn_frozen.frontalize_var(high, hm_lp, hm_lf);
    auto student = frn.restore_var(low);

    auto emb_teacher = embedder.embed_var(teacher.image);
    auto emb_student = embedder.embed_var(student.image);
    auto l_r = losses::loss_pixel(teacher.image, student.image);
    auto l_id = losses::loss_id(emb_teacher, emb_student);
    auto l_fa = losses::loss_fa(teacher.last_features, student.last_features);
    auto total = nn::add(nn::add(l_r, nn::affine(l_id, cfg.weights.lambda4, 0.0)),
                         nn::affine(l_fa, cfg.weights.lambda5, 0.0));

    StepLogEntry entry;
    entry.step = step;
    entry.phase = cfg.phase;
    entry.components = {{"l_r", l_r->value.item()},
                        {"l_id", l_id->value.item()},
                        {"l_fa", l_fa->value.item()}};
    entry.total = total->value.item();
    check_finite_loss(entry.total, "frn-ti", step, entry.components);

    opt.zero_grads();
    nn::backward(total);
    entry.clipped = nn::clip_global_grad_norm(frn.params(), cfg.grad_clip) > cfg.grad_clip;
    opt.step();
    if (log) log->append(entry);
    if (!cfg.stop_component.empty() && entry.component(cfg.stop_component) <= cfg.stop_threshold)
      break;

    if (!run_dir.empty() && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      const std::string dir = (fs::path(run_dir) / "frn-ti" / std::to_string(step + 1)).string();
      write_phase_snapshot(dir, cfg, batch_rng.state_string());
      frn.save((fs::path(dir) / "frn.ckpt").string());
    }
  }

  if (!run_dir.empty()) {
    const std::string dir = (fs::path(run_dir) / "frn-ti" / "final").string();
    write_phase_snapshot(dir, cfg, batch_rng.state_string());
    frn.save((fs::path(dir) / "frn.ckpt").string());
  }
  return frn;
}

} // namespace mdfr::training
