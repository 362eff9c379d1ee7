#include "concept_canvas/style/style.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/nn/adam.hpp"

namespace canvas::style {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

constexpr std::array<double, 3> kMean = {0.485, 0.456, 0.406};

nn::Tensor normalize_input(const nn::Tensor& pixels) {
  if (pixels.channels() != 3) fail(ErrorKind::kInvalidArgument, "style: expected RGB pixel tensor");
  nn::Tensor x = pixels;
  const std::size_t plane = x.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const double scale = dam::VggBackbone::input_scale(c);
    for (std::size_t i = 0; i < plane; ++i) x[c * plane + i] = (x[c * plane + i] - kMean[c]) * scale;
  }
  return x;
}

// Chain rule through normalize_input.
void to_pixel_gradient(nn::Tensor& grad) {
  const std::size_t plane = grad.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const double scale = dam::VggBackbone::input_scale(c);
    for (std::size_t i = 0; i < plane; ++i) grad[c * plane + i] *= scale;
  }
}

void check_input(const nn::Tensor& t) {
  if (t.channels() != 3 || t.height() == 0 || t.height() % 32 != 0 || t.width() % 32 != 0) {
    fail(ErrorKind::kInvalidArgument, "style: pixel tensor must be 3 x H x W with sides divisible by 32, got " +
                                          t.shape().str());
  }
}

// Forward to the deepest layer any term needs.
std::vector<nn::Tensor> trace_to(const dam::VggBackbone& backbone, const nn::Tensor& pixels, std::size_t deepest) {
  return backbone.net().forward_trace(normalize_input(pixels), deepest + 1);
}

std::size_t layer_index(const dam::VggBackbone& backbone, const std::string& name) {
  const auto idx = backbone.activation_layer(name);
  if (idx == nn::Sequential::npos) fail(ErrorKind::kInvalidArgument, "backbone has no layer '" + name + "'");
  return idx;
}

// Adds w * ||G(F) - A||_F^2 and its feature gradient.
double gram_term(const nn::Tensor& features, const GramMatrix& target, double weight, nn::Tensor* grad) {
  const int c = features.channels();
  const auto n = static_cast<Eigen::Index>(features.shape().plane());
  if (target.channels != c) fail(ErrorKind::kInvalidArgument, "style target channel mismatch");
  ConstMap f(features.data(), c, n);
  const double norm = static_cast<double>(c) * static_cast<double>(n);
  RowMatrix g = (f * f.transpose()) / norm;
  g -= ConstMap(target.values.data(), c, c);
  const double loss = weight * g.squaredNorm();
  if (grad != nullptr) {
    *grad = nn::Tensor(features.shape());
    Map(grad->data(), c, n).noalias() = (4.0 * weight / norm) * (g * f);
  }
  return loss;
}

double content_term(const nn::Tensor& features, const nn::Tensor& target, nn::Tensor* grad) {
  if (!(features.shape() == target.shape())) fail(ErrorKind::kInvalidArgument, "content feature shape mismatch");
  const double norm = static_cast<double>(features.size());
  double loss = 0.0;
  if (grad != nullptr) *grad = nn::Tensor(features.shape());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double d = features[i] - target[i];
    loss += d * d;
    if (grad != nullptr) (*grad)[i] = 2.0 * d / norm;
  }
  return loss / norm;
}

int round32(double v) { return std::max(32, static_cast<int>(std::lround(v / 32.0)) * 32); }

}  // namespace

TileLayout mosaic_layout(std::size_t exemplar_count, int cell_side) {
  if (exemplar_count == 0) fail(ErrorKind::kInvalidArgument, "style reference needs at least one exemplar");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(exemplar_count))));
  const int rows = static_cast<int>((exemplar_count + cols - 1) / cols);
  return {rows, cols, cell_side};
}

StyleReference build_style_reference(const std::vector<image::ImageRecord>& exemplars, int cell_side) {
  if (cell_side <= 0) fail(ErrorKind::kInvalidArgument, "cell_side must be positive");
  StyleReference ref;
  ref.layout = mosaic_layout(exemplars.size(), cell_side);
  ref.mosaic = image::Image(ref.layout.cols * cell_side, ref.layout.rows * cell_side);
  std::vector<image::Image> cells;
  cells.reserve(exemplars.size());
  for (const auto& e : exemplars) {
    cells.push_back(image::normalize_square(e.pixels, cell_side));
    ref.source_ids.push_back(e.id);
  }
  const int total = ref.layout.rows * ref.layout.cols;
  for (int cell = 0; cell < total; ++cell) {
    const auto& src = cells[static_cast<std::size_t>(cell) % cells.size()];
    const int x0 = (cell % ref.layout.cols) * cell_side;
    const int y0 = (cell / ref.layout.cols) * cell_side;
    for (int y = 0; y < cell_side; ++y) {
      std::copy_n(&src.rgb[static_cast<std::size_t>(y) * cell_side * 3], cell_side * 3,
                  &ref.mosaic.rgb[(static_cast<std::size_t>(y0 + y) * ref.mosaic.width + x0) * 3]);
    }
  }
  return ref;
}

void StyleConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidArgument, "style: " + m); };
  if (style_layers.empty()) bad("at least one style layer is required");
  if (layer_weights.size() != style_layers.size()) bad("layer_weights must match style_layers");
  dam::check_layer_names(style_layers);
  dam::block_of(content_layer);
  if (content_weight < 0.0 || style_weight < 0.0) bad("loss weights must be non-negative");
  if (output_side <= 0 || output_side % 32 != 0) bad("output_side must be a positive multiple of 32");
  if (output_side > 1048) bad("output_side is capped at 1048");
  if (steps < 0) bad("steps must be >= 0");
  if (!(step_size > 0.0)) bad("step_size must be positive");
}

void to_json(nlohmann::json& j, const StyleConfig& c) {
  j = {{"style_layers", c.style_layers}, {"layer_weights", c.layer_weights}, {"content_layer", c.content_layer},
       {"content_weight", c.content_weight}, {"style_weight", c.style_weight}, {"output_side", c.output_side},
       {"steps", c.steps}, {"step_size", c.step_size}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, StyleConfig& c) {
  c.style_layers = j.at("style_layers").get<std::vector<std::string>>();
  c.layer_weights = j.at("layer_weights").get<std::vector<double>>();
  c.content_layer = j.at("content_layer").get<std::string>();
  c.content_weight = j.at("content_weight").get<double>();
  c.style_weight = j.at("style_weight").get<double>();
  c.output_side = j.at("output_side").get<int>();
  c.steps = j.at("steps").get<int>();
  c.step_size = j.at("step_size").get<double>();
  c.seed = j.value("seed", std::uint64_t{0});
}

GramMatrix gram(const nn::Tensor& feature_map) {
  const int c = feature_map.channels();
  const auto n = static_cast<Eigen::Index>(feature_map.shape().plane());
  GramMatrix g;
  g.channels = c;
  g.values.assign(static_cast<std::size_t>(c) * c, 0.0);
  if (c == 0 || n == 0) return g;
  ConstMap f(feature_map.data(), c, n);
  Map m(g.values.data(), c, c);
  m.selfadjointView<Eigen::Lower>().rankUpdate(f, 1.0 / (static_cast<double>(c) * static_cast<double>(n)));
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
  return g;
}

nn::Tensor pixels_to_tensor(const image::Image& img) {
  return nn::Tensor({3, img.height, img.width}, image::to_planar(img));
}

image::Image tensor_to_pixels(const nn::Tensor& t) { return image::from_planar(t.values(), t.width(), t.height()); }

StyleTargets style_targets(const dam::VggBackbone& backbone, const image::Image& mosaic, int output_side,
                           const StyleConfig& config) {
  const double scale = static_cast<double>(output_side) / std::min(mosaic.width, mosaic.height);
  const int w = mosaic.width <= mosaic.height ? output_side : round32(mosaic.width * scale);
  const int h = mosaic.height <= mosaic.width ? output_side : round32(mosaic.height * scale);
  const auto scaled = image::resize_bilinear(mosaic, w, h);
  const auto pixels = pixels_to_tensor(scaled);
  check_input(pixels);
  const auto maps = backbone.extract(normalize_input(pixels), config.style_layers);
  StyleTargets targets;
  for (const auto& name : config.style_layers) targets.grams.push_back(gram(maps.at(name)));
  return targets;
}

nn::Tensor content_features(const nn::Tensor& content, const StyleConfig& config, const dam::VggBackbone& backbone) {
  check_input(content);
  const std::vector<std::string> names = {config.content_layer};
  return backbone.extract(normalize_input(content), names).at(config.content_layer);
}

CombinedLoss combined_loss(const nn::Tensor& output, const nn::Tensor& content_target, const StyleTargets& targets,
                           const StyleConfig& config, const dam::VggBackbone& backbone) {
  check_input(output);
  if (targets.grams.size() != config.style_layers.size()) {
    fail(ErrorKind::kInvalidArgument, "style targets do not match the configured layers");
  }
  const bool use_content = config.content_weight != 0.0;
  const bool use_style = config.style_weight != 0.0;
  std::size_t deepest = 0;
  if (use_content) deepest = std::max(deepest, layer_index(backbone, config.content_layer));
  if (use_style) {
    for (const auto& n : config.style_layers) deepest = std::max(deepest, layer_index(backbone, n));
  }
  CombinedLoss out;
  out.grad = nn::Tensor(output.shape());
  if (!use_content && !use_style) return out;

  const auto trace = trace_to(backbone, output, deepest);
  std::map<std::size_t, nn::Tensor> injected;
  auto inject = [&](std::size_t idx, nn::Tensor g, double w) {
    g *= w;
    auto [it, inserted] = injected.try_emplace(idx, std::move(g));
    if (!inserted) it->second += g;
  };
  if (use_content) {
    const auto idx = layer_index(backbone, config.content_layer);
    nn::Tensor g;
    out.content = content_term(trace[idx + 1], content_target, &g);
    inject(idx, std::move(g), config.content_weight);
  }
  if (use_style) {
    for (std::size_t l = 0; l < config.style_layers.size(); ++l) {
      const auto idx = layer_index(backbone, config.style_layers[l]);
      nn::Tensor g;
      out.style += gram_term(trace[idx + 1], targets.grams[l], config.layer_weights[l], &g);
      inject(idx, std::move(g), config.style_weight);
    }
  }
  out.total = config.content_weight * out.content + config.style_weight * out.style;
  out.grad = backbone.net().backward(trace, injected, nullptr);
  to_pixel_gradient(out.grad);
  return out;
}

LossGradient style_loss(const nn::Tensor& output, const StyleTargets& targets, const StyleConfig& config,
                        const dam::VggBackbone& backbone) {
  StyleConfig only_style = config;
  only_style.content_weight = 0.0;
  only_style.style_weight = 1.0;
  auto r = combined_loss(output, nn::Tensor(), targets, only_style, backbone);
  return {r.style, std::move(r.grad)};
}

LossGradient style_loss(const nn::Tensor& output, const StyleReference& reference, const StyleConfig& config,
                        const dam::VggBackbone& backbone) {
  check_input(output);
  const auto targets = style_targets(backbone, reference.mosaic, std::min(output.height(), output.width()), config);
  return style_loss(output, targets, config, backbone);
}

LossGradient content_loss(const nn::Tensor& output, const nn::Tensor& content, const StyleConfig& config,
                          const dam::VggBackbone& backbone) {
  if (!(output.shape() == content.shape())) {
    fail(ErrorKind::kInvalidArgument, "content loss: size mismatch " + output.shape().str() + " vs " +
                                          content.shape().str());
  }
  StyleConfig only_content = config;
  only_content.content_weight = 1.0;
  only_content.style_weight = 0.0;
  auto r = combined_loss(output, content_features(content, config, backbone), StyleTargets{std::vector<GramMatrix>(config.style_layers.size())},
                         only_content, backbone);
  return {r.content, std::move(r.grad)};
}

std::string losses_csv(const std::vector<StepLoss>& losses) {
  std::ostringstream out;
  out.precision(17);
  out << "step,content,style,total\n";
  for (const auto& l : losses) out << l.step << ',' << l.content << ',' << l.style << ',' << l.total << '\n';
  return out.str();
}

StylizeResult stylize(const image::ImageRecord& content, const StyleReference& reference, const StyleConfig& config,
                      const dam::VggBackbone& backbone) {
  config.validate();
  dam::VggBackbone net = backbone;
  net.set_pool_mode(nn::PoolMode::kAverage);

  const int side = config.output_side;
  const nn::Tensor content_pixels = pixels_to_tensor(image::normalize_square(content.pixels, side));
  const nn::Tensor target_features =
      config.content_weight != 0.0 ? content_features(content_pixels, config, net) : nn::Tensor();
  const StyleTargets targets = config.style_weight != 0.0
                                   ? style_targets(net, reference.mosaic, side, config)
                                   : StyleTargets{std::vector<GramMatrix>(config.style_layers.size())};

  StylizeResult result;
  nn::Tensor x = content_pixels;
  nn::Tensor best = x;
  double best_total = 0.0;
  nn::Adam adam({.learning_rate = config.step_size}, {x.size()});
  for (int step = 0;; ++step) {
    const auto loss = combined_loss(x, target_features, targets, config, net);
    if (!std::isfinite(loss.total)) {
      result.aborted = true;
      result.warning = "non-finite loss at step " + std::to_string(step) + "; returning last finite iterate";
      break;
    }
    result.losses.push_back({step, loss.content, loss.style, loss.total});
    if (step == 0 || loss.total < best_total) {
      best_total = loss.total;
      best = x;
      result.best_step = step;
    }
    if (step == config.steps) break;
    adam.step(x.values(), loss.grad.values());
    for (auto& v : x.values()) v = std::clamp(v, 0.0, 1.0);
  }

  result.output.pixels = tensor_to_pixels(best);
  result.output.id = content_id(image::encode_png(result.output.pixels));
  result.output.source = {"style_transfer", content.id, "styled:" + content.id};
  result.output.label = image::ClassLabel::kUnlabeled;
  result.output.provenance = image::Provenance::kStyled;
  return result;
}

}  // namespace canvas::style
