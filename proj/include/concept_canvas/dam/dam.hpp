#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/dam/vgg.hpp"
#include "concept_canvas/image/record.hpp"

namespace canvas::dam {

struct DamConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  int frozen_blocks = 3;  // blocks 1..frozen_blocks keep their weights
  int batch_size = 8;
  int image_side = 224;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const DamConfig& c);
void from_json(const nlohmann::json& j, DamConfig& c);

struct DamReport {
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  std::vector<double> epoch_losses;
};

void to_json(nlohmann::json& j, const DamReport& r);

// VGG trunk plus a global-average-pool -> single-logit head.
class DamModel {
 public:
  DamModel(VggBackbone backbone, DamConfig config);

  const VggBackbone& backbone() const { return backbone_; }
  VggBackbone& backbone() { return backbone_; }
  const nn::Sequential& head() const { return head_; }
  nn::Sequential& head() { return head_; }
  const DamConfig& config() const { return config_; }
  DamReport& report() { return report_; }
  const DamReport& report() const { return report_; }

  double logit(const image::Image& img) const;

  void save(const std::filesystem::path& dir, const nlohmann::json& extra = {}) const;
  static DamModel load(const std::filesystem::path& dir);

 private:
  VggBackbone backbone_;
  nn::Sequential head_;
  DamConfig config_;
  DamReport report_;
};

// Trains the unfrozen blocks and the head with binary cross-entropy
// (POSITIVE = 1). Images must already be config.image_side square.
DamModel train_dam(const std::vector<image::ImageRecord>& dataset, const DamConfig& config, VggBackbone backbone);

// Sigmoid of the logit; requires an image_side x image_side input.
double score_image(const DamModel& model, const image::Image& img);

struct RankedImage {
  image::ImageRecord record;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

// Descending score, ties by content id; returns min(top_k, n) entries.
std::vector<RankedImage> rank_images(const DamModel& model, const std::vector<image::ImageRecord>& images,
                                     std::size_t top_k);
std::vector<RankedImage> rank_by_score(std::vector<image::ImageRecord> images, const std::vector<double>& scores,
                                       std::size_t top_k);

double accuracy(const DamModel& model, const std::vector<image::ImageRecord>& labeled);

}  // namespace canvas::dam
