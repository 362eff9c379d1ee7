#include "concept_canvas/dam/vgg.hpp"

#include <algorithm>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/nn/weights_io.hpp"

namespace canvas::dam {
namespace {

constexpr std::array<double, 3> kMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kStd = {0.229, 0.224, 0.225};
constexpr std::array<int, 5> kBlockConvs = {2, 2, 3, 3, 3};
constexpr std::array<int, 5> kBlockWidths = {64, 128, 256, 512, 512};

bool is_conv_name(std::string_view name) {
  return std::find(kConvLayers.begin(), kConvLayers.end(), name) != kConvLayers.end();
}

}  // namespace

int block_of(std::string_view layer) {
  if (!is_conv_name(layer)) fail(ErrorKind::kInvalidArgument, "unknown layer name '" + std::string(layer) + "'");
  return layer[4] - '0';
}

int full_width_channels(std::string_view layer) { return kBlockWidths[block_of(layer) - 1]; }

void check_layer_names(std::span<const std::string> names) {
  for (const auto& n : names) block_of(n);
}

VggBackbone::VggBackbone(int width_divisor, std::uint64_t seed) : width_divisor_(width_divisor) {
  if (width_divisor < 1) fail(ErrorKind::kInvalidArgument, "width divisor must be >= 1");
  Rng rng = Rng::derive(seed, 0x766767);
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    const int width = std::max(1, kBlockWidths[b] / width_divisor);
    for (int i = 0; i < kBlockConvs[b]; ++i) {
      const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i + 1);
      net_.emplace<nn::Conv3x3>("conv" + suffix, in, width).init_he(rng);
      net_.emplace<nn::Relu>("relu" + suffix);
      in = width;
    }
    net_.emplace<nn::Pool2>("pool" + std::to_string(b + 1), nn::PoolMode::kMax);
  }
}

int VggBackbone::channels(std::string_view layer) const {
  return std::max(1, full_width_channels(layer) / width_divisor_);
}

void VggBackbone::set_pool_mode(nn::PoolMode mode) {
  pool_mode_ = mode;
  for (std::size_t i = 0; i < net_.size(); ++i) {
    if (auto* pool = dynamic_cast<nn::Pool2*>(&net_.layer(i))) pool->set_mode(mode);
  }
}

std::size_t VggBackbone::activation_layer(std::string_view conv_name) const {
  block_of(conv_name);
  return net_.find("relu" + std::string(conv_name.substr(4)));
}

std::size_t VggBackbone::block_end(int block) const {
  if (block < 0 || block > 5) fail(ErrorKind::kInvalidArgument, "block out of range");
  if (block == 0) return 0;
  return net_.find("pool" + std::to_string(block)) + 1;
}

double VggBackbone::input_scale(int channel) { return 1.0 / kStd[channel]; }

nn::Tensor VggBackbone::preprocess(const image::Image& img) const {
  auto planar = image::to_planar(img);
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) planar[c * plane + i] = (planar[c * plane + i] - kMean[c]) / kStd[c];
  }
  return nn::Tensor({3, img.height, img.width}, std::move(planar));
}

FeatureMaps VggBackbone::extract(const nn::Tensor& input, std::span<const std::string> layer_names) const {
  check_layer_names(layer_names);
  if (input.channels() != 3 || input.height() % 32 != 0 || input.width() % 32 != 0 || input.height() == 0 ||
      input.width() == 0) {
    fail(ErrorKind::kInvalidArgument, "backbone input must be 3 channels with sides divisible by 32, got " +
                                          input.shape().str());
  }
  std::size_t deepest = 0;
  for (const auto& n : layer_names) deepest = std::max(deepest, activation_layer(n) + 1);
  FeatureMaps out;
  nn::Tensor x = input;
  for (std::size_t i = 0; i < deepest; ++i) {
    x = net_.layer(i).forward(x);
    for (const auto& n : layer_names) {
      if (activation_layer(n) == i) out.insert_or_assign(n, x);
    }
  }
  return out;
}

void VggBackbone::load_weights(const std::filesystem::path& path) {
  nn::import_params(net_, nn::load_arrays(path), "");
}

void VggBackbone::save_weights(const std::filesystem::path& path) const {
  nn::save_arrays(path, nn::export_params(net_, ""));
}

FeatureMaps extract_features(const VggBackbone& backbone, const image::Image& img,
                             std::span<const std::string> layer_names) {
  return backbone.extract(backbone.preprocess(img), layer_names);
}

}  // namespace canvas::dam
