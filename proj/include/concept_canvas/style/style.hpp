#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/dam/vgg.hpp"
#include "concept_canvas/image/record.hpp"

namespace canvas::style {

struct TileLayout {
  int rows = 0;
  int cols = 0;
  int cell_side = 0;
};

// cols = ceil(sqrt(n)), rows = ceil(n / cols).
TileLayout mosaic_layout(std::size_t exemplar_count, int cell_side);

struct StyleReference {
  image::Image mosaic;
  TileLayout layout;
  std::vector<std::string> source_ids;
};

// Each exemplar is center-cropped and resized to cell_side, placed row-major;
// leftover cells repeat exemplars from the start.
StyleReference build_style_reference(const std::vector<image::ImageRecord>& exemplars, int cell_side);

struct StyleConfig {
  std::vector<std::string> style_layers = {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
  std::vector<double> layer_weights = {0.2, 0.2, 0.2, 0.2, 0.2};
  std::string content_layer = "conv4_2";
  double content_weight = 1.0;   // alpha
  double style_weight = 1000.0;  // beta
  int output_side = 1024;
  int steps = 500;
  double step_size = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const StyleConfig& c);
void from_json(const nlohmann::json& j, StyleConfig& c);

// C x C channel correlation of a feature map, normalized by C * N.
struct GramMatrix {
  int channels = 0;
  std::vector<double> values;  // row-major
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * channels + j]; }
};

GramMatrix gram(const nn::Tensor& feature_map);

// Loss value plus its gradient with respect to planar [0,1] output pixels.
struct LossGradient {
  double loss = 0.0;
  nn::Tensor grad;
};

// Precomputed style statistics for one output size.
struct StyleTargets {
  std::vector<GramMatrix> grams;  // aligned with config.style_layers
};

// Scales the mosaic so its shorter side equals `output_side` (other side
// rounded to a multiple of 32), then records the Gram matrix of every style
// layer. The backbone's pooling mode is used as given.
StyleTargets style_targets(const dam::VggBackbone& backbone, const image::Image& mosaic, int output_side,
                           const StyleConfig& config);

// Pixel tensors are planar RGB in [0, 1] with sides divisible by 32.
LossGradient style_loss(const nn::Tensor& output, const StyleTargets& targets, const StyleConfig& config,
                        const dam::VggBackbone& backbone);
LossGradient style_loss(const nn::Tensor& output, const StyleReference& reference, const StyleConfig& config,
                        const dam::VggBackbone& backbone);
LossGradient content_loss(const nn::Tensor& output, const nn::Tensor& content, const StyleConfig& config,
                          const dam::VggBackbone& backbone);

struct CombinedLoss {
  double content = 0.0;
  double style = 0.0;
  double total = 0.0;
  nn::Tensor grad;
};

// alpha * content_loss + beta * style_loss from a single forward/backward pass.
CombinedLoss combined_loss(const nn::Tensor& output, const nn::Tensor& content_features,
                           const StyleTargets& targets, const StyleConfig& config, const dam::VggBackbone& backbone);
nn::Tensor content_features(const nn::Tensor& content, const StyleConfig& config, const dam::VggBackbone& backbone);

nn::Tensor pixels_to_tensor(const image::Image& img);
image::Image tensor_to_pixels(const nn::Tensor& t);

struct StepLoss {
  int step = 0;
  double content = 0.0;
  double style = 0.0;
  double total = 0.0;
};

struct StylizeResult {
  image::ImageRecord output;  // provenance STYLED
  std::vector<StepLoss> losses;
  int best_step = 0;
  bool aborted = false;
  std::string warning;
};

std::string losses_csv(const std::vector<StepLoss>& losses);

// Pixel-space optimization initialized from the content image (center-crop
// and bilinear scale to output_side). Uses a copy of the backbone switched to
// average pooling. Pixels are clamped to [0,1] after each Adam step; the
// lowest-total-loss iterate is returned.
StylizeResult stylize(const image::ImageRecord& content, const StyleReference& reference, const StyleConfig& config,
                      const dam::VggBackbone& backbone);

}  // namespace canvas::style
