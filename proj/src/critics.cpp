#include "mdfr/critics.hpp"

#include <cmath>

#include "mdfr/degradation.hpp"
#include "mdfr/optim.hpp"

namespace mdfr::critics {

// ---- critic ----------------------------------------------------------------

void CriticConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    throw InvalidArgumentError("critic config: image_size must be a positive multiple of 32");
  if (base_channels < 1 || condition_channels < 1)
    throw InvalidArgumentError("critic config: channel widths must be positive");
  if (!(logit_clip > 0.0))
    throw InvalidArgumentError("critic config: logit clip must be positive");
}

std::map<std::string, std::string> CriticConfig::to_kv() const {
  return {{"image_size", std::to_string(image_size)},
          {"base_channels", std::to_string(base_channels)},
          {"condition_channels", std::to_string(condition_channels)},
          {"leaky_slope", format_double(leaky_slope)},
          {"logit_clip", format_double(logit_clip)}};
}

CriticConfig CriticConfig::from_kv(const std::map<std::string, std::string>& kv) {
  CriticConfig cfg;
  cfg.image_size = std::stoi(kv.at("image_size"));
  cfg.base_channels = std::stoi(kv.at("base_channels"));
  cfg.condition_channels = std::stoi(kv.at("condition_channels"));
  cfg.leaky_slope = std::stod(kv.at("leaky_slope"));
  cfg.logit_clip = std::stod(kv.at("logit_clip"));
  cfg.validate();
  return cfg;
}

std::string critic_role_name(CriticRole role) {
  return role == CriticRole::kPCD ? "PCD" : "ICD";
}

CriticRole critic_role_from_name(const std::string& name) {
  if (name == "PCD") return CriticRole::kPCD;
  if (name == "ICD") return CriticRole::kICD;
  throw InvalidArgumentError("unknown critic role: " + name);
}

Critic::Critic(CriticRole role, const CriticConfig& cfg, std::uint64_t init_seed)
    : role_(role), cfg_(cfg) {
  cfg_.validate();
  RandomStream rng(derive_seed(init_seed, role == CriticRole::kPCD ? 0xD1 : 0xD2));
  const int b = cfg_.base_channels;
  // VGG-11 conv plan: 64, M, 128, M, 256, 256, M, 512, 512, M, 512, 512, M.
  const int widths[8] = {b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b, 8 * b, 8 * b};
  const bool pool[8] = {true, true, false, true, false, true, false, true};
  int in_c = 3 + cfg_.condition_channels;
  for (int i = 0; i < 8; ++i) {
    convs_.push_back(
        nn::make_conv(params_, rng, "conv" + std::to_string(i + 1), in_c, widths[i], 3, 1, 1));
    pool_after_.push_back(pool[i]);
    in_c = widths[i];
  }
  const int tail = cfg_.image_size / 32;
  head_ = nn::make_linear(params_, rng, "head", 8 * b * tail * tail, 1);
}

nn::VarPtr Critic::score_var(const nn::VarPtr& img, const nn::VarPtr& condition) const {
  const auto& iv = img->value;
  const auto& cv = condition->value;
  if (iv.c() != 3 || iv.h() != cfg_.image_size || iv.w() != cfg_.image_size)
    throw ShapeError("critic: image shape " + iv.shape_string());
  if (cv.c() != cfg_.condition_channels || cv.h() != cfg_.image_size ||
      cv.w() != cfg_.image_size || cv.n() != iv.n())
    throw ShapeError("critic: condition shape " + cv.shape_string());
  nn::VarPtr h = nn::concat_channels({condition, img});
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = nn::leaky_relu(convs_[i](h), cfg_.leaky_slope);
    if (pool_after_[i]) h = nn::maxpool2(h);
  }
  h = nn::flatten_spatial(h);
  nn::VarPtr logit = nn::clamp(head_(h), -cfg_.logit_clip, cfg_.logit_clip);
  return nn::sigmoid(logit);
}

double Critic::score(const FaceImage& img, const geometry::HeatmapStack& target_pose) const {
  if (role_ != CriticRole::kPCD)
    throw InvalidArgumentError("pose-conditioned scoring requires the PCD role");
  auto s = score_var(nn::Variable::leaf(nn::to_tensor(img)),
                     nn::Variable::leaf(nn::to_tensor(target_pose)));
  return s->value.item();
}

double Critic::score(const FaceImage& img, const FeatureTensor& identity_map) const {
  if (role_ != CriticRole::kICD)
    throw InvalidArgumentError("identity-conditioned scoring requires the ICD role");
  auto s = score_var(nn::Variable::leaf(nn::to_tensor(img)),
                     nn::Variable::leaf(identity_map.values));
  return s->value.item();
}

void Critic::save(const std::string& path) const {
  auto kv = cfg_.to_kv();
  kv["role"] = critic_role_name(role_);
  nn::save_checkpoint(path, critic_role_name(role_), kv, params_);
}

Critic Critic::from_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  Critic c(critic_role_from_name(ck.role), CriticConfig::from_kv(ck.config), 0);
  c.params_.load_values(ck.tensors);
  return c;
}

// ---- embedder ----------------------------------------------------------------

void EmbedderConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0)
    throw InvalidArgumentError("embedder config: image_size must be a positive multiple of 16");
  if (base_channels < 1 || embed_dim < 1)
    throw InvalidArgumentError("embedder config: sizes must be positive");
  if (num_classes < 0) throw InvalidArgumentError("embedder config: negative class count");
}

std::map<std::string, std::string> EmbedderConfig::to_kv() const {
  return {{"image_size", std::to_string(image_size)},
          {"base_channels", std::to_string(base_channels)},
          {"embed_dim", std::to_string(embed_dim)},
          {"num_classes", std::to_string(num_classes)},
          {"leaky_slope", format_double(leaky_slope)}};
}

EmbedderConfig EmbedderConfig::from_kv(const std::map<std::string, std::string>& kv) {
  EmbedderConfig cfg;
  cfg.image_size = std::stoi(kv.at("image_size"));
  cfg.base_channels = std::stoi(kv.at("base_channels"));
  cfg.embed_dim = std::stoi(kv.at("embed_dim"));
  cfg.num_classes = std::stoi(kv.at("num_classes"));
  cfg.leaky_slope = std::stod(kv.at("leaky_slope"));
  cfg.validate();
  return cfg;
}

Embedder::Embedder(const EmbedderConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  RandomStream rng(derive_seed(init_seed, 0x1D));
  const int b = cfg_.base_channels;
  const int widths[4] = {b, 2 * b, 4 * b, 8 * b};
  int in_c = 3;
  for (int i = 0; i < 4; ++i) {
    convs_.push_back(
        nn::make_conv(params_, rng, "conv" + std::to_string(i + 1), in_c, widths[i], 3, 2, 1));
    in_c = widths[i];
  }
  embed_head_ = nn::make_linear(params_, rng, "embed", 8 * b, cfg_.embed_dim);
  if (cfg_.num_classes > 0)
    class_head_ = nn::make_linear(params_, rng, "classify", cfg_.embed_dim, cfg_.num_classes);
}

nn::VarPtr Embedder::feature_map_var(const nn::VarPtr& img) const {
  const auto& iv = img->value;
  if (iv.c() != 3 || iv.h() != cfg_.image_size || iv.w() != cfg_.image_size)
    throw ShapeError("embedder: image shape " + iv.shape_string());
  nn::VarPtr h = img;
  for (const auto& conv : convs_) h = nn::leaky_relu(conv(h), cfg_.leaky_slope);
  return h;
}

nn::VarPtr Embedder::embed_var(const nn::VarPtr& img) const {
  return embed_head_(nn::global_avg_pool(feature_map_var(img)));
}

nn::VarPtr Embedder::logits_var(const nn::VarPtr& img) const {
  if (!class_head_) throw InvalidArgumentError("embedder has no classifier head");
  return (*class_head_)(embed_var(img));
}

IdentityEmbedding Embedder::embed(const FaceImage& img) const {
  auto e = embed_var(nn::Variable::leaf(nn::to_tensor(img)));
  IdentityEmbedding out;
  out.v.assign(e->value.data(), e->value.data() + e->value.numel());
  return out;
}

FeatureTensor Embedder::identity_map(const FaceImage& img) const {
  auto fm = feature_map_var(nn::Variable::leaf(nn::to_tensor(img)));
  const auto& v = fm->value;
  nn::Tensor resized(1, v.c(), cfg_.image_size, cfg_.image_size);
  for (int c = 0; c < v.c(); ++c)
    degradation::resize_bicubic_plane(v.ptr(0, c), v.h(), v.w(), resized.ptr(0, c),
                                      cfg_.image_size, cfg_.image_size);
  return {std::move(resized), 4, "R_id"};
}

int Embedder::classify(const FaceImage& img) const {
  auto logits = logits_var(nn::Variable::leaf(nn::to_tensor(img)));
  const auto& v = logits->value;
  int best = 0;
  for (int j = 1; j < v.c(); ++j)
    if (v.at(0, j, 0, 0) > v.at(0, best, 0, 0)) best = j;
  return best;
}

void Embedder::save(const std::string& path) const {
  nn::save_checkpoint(path, "R_id", cfg_.to_kv(), params_);
}

Embedder Embedder::from_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  Embedder e(EmbedderConfig::from_kv(ck.config), 0);
  e.params_.load_values(ck.tensors);
  return e;
}

// ---- embedder training ---------------------------------------------------------

EmbedderTrainResult train_toy_embedder(const std::vector<FaceImage>& images,
                                       const std::vector<int>& labels,
                                       const EmbedderConfig& cfg,
                                       const EmbedderTrainOptions& opts) {
  if (images.empty() || images.size() != labels.size())
    throw DataError("train_toy_embedder: images and labels must align");
  EmbedderConfig train_cfg = cfg;
  if (train_cfg.num_classes == 0) {
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    train_cfg.num_classes = max_label + 1;
  }

  EmbedderTrainResult result{Embedder(train_cfg, opts.seed), 0.0};
  Embedder& embedder = result.embedder;
  nn::AdamOptimizer optimizer(embedder.params(), opts.lr, 0.9, 0.999);
  RandomStream batch_rng(derive_seed(opts.seed, 0xBA7C4));

  const int n = static_cast<int>(images.size());
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<FaceImage> batch;
    std::vector<int> batch_labels;
    for (int i = 0; i < opts.batch_size; ++i) {
      const int idx = batch_rng.uniform_int(0, n - 1);
      batch.push_back(images[idx]);
      batch_labels.push_back(labels[idx]);
    }
    auto input = nn::Variable::leaf(nn::batch_images(batch));
    auto loss = nn::cross_entropy_logits(embedder.logits_var(input), batch_labels);
    if (!std::isfinite(loss->value.item()))
      throw TrainingDiverged("embedder training produced a non-finite loss at step " +
                             std::to_string(step));
    optimizer.zero_grads();
    nn::backward(loss);
    optimizer.step();
    result.final_loss = loss->value.item();
  }
  return result;
}

double classification_accuracy(const Embedder& embedder, const std::vector<FaceImage>& images,
                               const std::vector<int>& labels) {
  if (images.empty() || images.size() != labels.size())
    throw DataError("classification_accuracy: images and labels must align");
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (embedder.classify(images[i]) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

} // namespace mdfr::critics
