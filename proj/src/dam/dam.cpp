#include "concept_canvas/dam/dam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/rng.hpp"
#include "concept_canvas/nn/adam.hpp"
#include "concept_canvas/nn/weights_io.hpp"

namespace canvas::dam {

void to_json(nlohmann::json& j, const DamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},         {"frozen_blocks", c.frozen_blocks},
       {"batch_size", c.batch_size},       {"image_side", c.image_side}, {"holdout_fraction", c.holdout_fraction},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DamConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.frozen_blocks = j.at("frozen_blocks").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.image_side = j.at("image_side").get<int>();
  c.holdout_fraction = j.at("holdout_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const DamReport& r) {
  j = {{"train_accuracy", r.train_accuracy}, {"holdout_accuracy", r.holdout_accuracy},
       {"train_size", r.train_size},         {"holdout_size", r.holdout_size},
       {"epoch_losses", r.epoch_losses}};
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Stable binary cross-entropy on a logit.
double bce_with_logit(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

nn::Sequential make_head(int channels, std::uint64_t seed) {
  nn::Sequential head;
  head.emplace<nn::GlobalAvgPool>("gap");
  Rng rng = Rng::derive(seed, 0x68656164);
  head.emplace<nn::Linear>("logit", channels, 1).init_he(rng, 1.0);
  return head;
}

void check_side(const DamConfig& config, const image::Image& img) {
  if (img.width != config.image_side || img.height != config.image_side) {
    fail(ErrorKind::kInvalidArgument, "DAM expects " + std::to_string(config.image_side) + "x" +
                                          std::to_string(config.image_side) + " input, got " +
                                          std::to_string(img.width) + "x" + std::to_string(img.height));
  }
}

}  // namespace

DamModel::DamModel(VggBackbone backbone, DamConfig config)
    : backbone_(std::move(backbone)), head_(make_head(backbone_.output_channels(), config.seed)), config_(config) {
  if (config_.image_side <= 0 || config_.image_side % 32 != 0) {
    fail(ErrorKind::kInvalidArgument, "dam image side must be a positive multiple of 32");
  }
}

double DamModel::logit(const image::Image& img) const {
  check_side(config_, img);
  const auto features = backbone_.net().forward(backbone_.preprocess(img));
  return head_.forward(features)[0];
}

void DamModel::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  std::filesystem::create_directories(dir);
  auto arrays = nn::export_params(backbone_.net(), "backbone.");
  auto head = nn::export_params(head_, "head.");
  arrays.insert(arrays.end(), head.begin(), head.end());
  nn::save_arrays(dir / "weights.bin", arrays);
  nlohmann::json meta = {{"config", config_}, {"report", report_}, {"width_divisor", backbone_.width_divisor()}};
  if (extra.is_object()) meta.update(extra);
  write_json_atomic(dir / "model.json", meta);
}

DamModel DamModel::load(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "model.json");
  DamModel model(VggBackbone(meta.at("width_divisor").get<int>()), meta.at("config").get<DamConfig>());
  const auto arrays = nn::load_arrays(dir / "weights.bin");
  nn::import_params(model.backbone_.net(), arrays, "backbone.");
  nn::import_params(model.head_, arrays, "head.");
  const auto& r = meta.at("report");
  model.report_.train_accuracy = r.value("train_accuracy", 0.0);
  model.report_.holdout_accuracy = r.value("holdout_accuracy", 0.0);
  model.report_.train_size = r.value("train_size", std::size_t{0});
  model.report_.holdout_size = r.value("holdout_size", std::size_t{0});
  model.report_.epoch_losses = r.value("epoch_losses", std::vector<double>{});
  return model;
}

DamModel train_dam(const std::vector<image::ImageRecord>& dataset, const DamConfig& config, VggBackbone backbone) {
  bool has_pos = false, has_neg = false;
  for (const auto& r : dataset) {
    has_pos |= r.label == image::ClassLabel::kPositive;
    has_neg |= r.label == image::ClassLabel::kNegative;
  }
  if (!has_pos || !has_neg) fail(ErrorKind::kInvalidArgument, "DAM training set must contain both classes");
  if (config.frozen_blocks < 0 || config.frozen_blocks > 5) fail(ErrorKind::kInvalidArgument, "frozen_blocks must be 0..5");
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorKind::kInvalidArgument, "invalid DAM schedule");
  for (const auto& r : dataset) check_side(config, r.pixels);

  backbone.set_pool_mode(nn::PoolMode::kMax);
  DamModel model(std::move(backbone), config);

  // Deterministic holdout split: every k-th labelled record in id order.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return dataset[a].id < dataset[b].id; });
  std::vector<std::size_t> train_idx, holdout_idx;
  const std::size_t stride =
      config.holdout_fraction > 0 ? static_cast<std::size_t>(std::max(2.0, std::round(1.0 / config.holdout_fraction))) : 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (dataset[order[i]].label == image::ClassLabel::kUnlabeled) continue;
    ((stride != 0 && i % stride == stride - 1) ? holdout_idx : train_idx).push_back(order[i]);
  }

  auto& trunk = model.backbone().net();
  auto& head = model.head();
  const std::size_t frozen_end = model.backbone().block_end(config.frozen_blocks);

  // Frozen layers never change, so their outputs are computed once.
  std::vector<nn::Tensor> cached;
  cached.reserve(train_idx.size());
  for (auto i : train_idx) cached.push_back(trunk.forward(model.backbone().preprocess(dataset[i].pixels), frozen_end));

  std::vector<nn::Param*> params = trunk.parameters();
  const auto head_params = head.parameters();
  params.insert(params.end(), head_params.begin(), head_params.end());
  nn::Adam adam = nn::Adam::for_params({.learning_rate = config.learning_rate}, params);

  std::vector<std::size_t> perm(train_idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = Rng::derive(config.seed, 0xda11, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      nn::Gradients trunk_grads = trunk.zero_gradients();
      nn::Gradients head_grads = head.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t k = perm[b];
        const double y = dataset[train_idx[k]].label == image::ClassLabel::kPositive ? 1.0 : 0.0;
        std::vector<nn::Tensor> trace(frozen_end + 1);
        trace[frozen_end] = cached[k];
        trunk.extend_trace(trace);
        const auto head_trace = head.forward_trace(trace.back());
        const double z = head_trace.back()[0];
        const double loss = bce_with_logit(z, y);
        if (!std::isfinite(loss)) fail(ErrorKind::kNumerical, "DAM loss became non-finite", {{"epoch", epoch}});
        epoch_loss += loss;
        nn::Tensor dz({1, 1, 1}, sigmoid(z) - y);
        const nn::Tensor d_features = head.backward(head_trace, dz, &head_grads, inv_batch);
        if (frozen_end < trunk.size()) trunk.backward(trace, d_features, &trunk_grads, inv_batch, frozen_end);
      }
      nn::Gradients all = std::move(trunk_grads);
      for (auto& g : head_grads) all.push_back(std::move(g));
      adam.step(params, all);
    }
    model.report().epoch_losses.push_back(perm.empty() ? 0.0 : epoch_loss / static_cast<double>(perm.size()));
  }

  auto subset = [&](const std::vector<std::size_t>& idx) {
    std::vector<image::ImageRecord> out;
    for (auto i : idx) out.push_back(dataset[i]);
    return out;
  };
  model.report().train_size = train_idx.size();
  model.report().holdout_size = holdout_idx.size();
  model.report().train_accuracy = accuracy(model, subset(train_idx));
  model.report().holdout_accuracy = holdout_idx.empty() ? 0.0 : accuracy(model, subset(holdout_idx));
  return model;
}

double score_image(const DamModel& model, const image::Image& img) { return sigmoid(model.logit(img)); }

double accuracy(const DamModel& model, const std::vector<image::ImageRecord>& labeled) {
  std::size_t n = 0, correct = 0;
  for (const auto& r : labeled) {
    if (r.label == image::ClassLabel::kUnlabeled) continue;
    ++n;
    const bool predicted_pos = model.logit(r.pixels) > 0.0;
    correct += predicted_pos == (r.label == image::ClassLabel::kPositive);
  }
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<RankedImage> rank_by_score(std::vector<image::ImageRecord> images, const std::vector<double>& scores,
                                       std::size_t top_k) {
  if (images.empty()) fail(ErrorKind::kInvalidArgument, "cannot rank an empty image set");
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return images[a].id < images[b].id;
  });
  const std::size_t n = std::min(top_k, images.size());
  std::vector<RankedImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({std::move(images[idx[i]]), scores[idx[i]], i + 1});
  return out;
}

std::vector<RankedImage> rank_images(const DamModel& model, const std::vector<image::ImageRecord>& images,
                                     std::size_t top_k) {
  if (images.empty()) fail(ErrorKind::kInvalidArgument, "cannot rank an empty image set");
  std::vector<double> scores;
  scores.reserve(images.size());
  for (const auto& r : images) scores.push_back(score_image(model, r.pixels));
  return rank_by_score(images, scores, top_k);
}

}  // namespace canvas::dam
