#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "concept_canvas/image/image.hpp"
#include "concept_canvas/nn/sequential.hpp"

namespace canvas::dam {

inline constexpr std::array<std::string_view, 13> kConvLayers = {
    "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3",
    "conv4_1", "conv4_2", "conv4_3", "conv5_1", "conv5_2", "conv5_3"};

// Full-width channel count of a conv layer name ("conv3_2" -> 256).
int full_width_channels(std::string_view layer);
// Block number 1..5 of a conv layer name.
int block_of(std::string_view layer);

using FeatureMaps = std::map<std::string, nn::Tensor, std::less<>>;

// VGG16 convolutional trunk: 13 3x3 convs with ReLU, 2x2 pooling after each
// of the five blocks. A width divisor > 1 shrinks every channel count while
// keeping the topology and layer names.
class VggBackbone {
 public:
  explicit VggBackbone(int width_divisor = 1, std::uint64_t seed = 0);

  int width_divisor() const { return width_divisor_; }
  int channels(std::string_view layer) const;
  int output_channels() const { return channels("conv5_3"); }

  // Pooling used after each block: max for classification, average for style.
  void set_pool_mode(nn::PoolMode mode);
  nn::PoolMode pool_mode() const { return pool_mode_; }

  const nn::Sequential& net() const { return net_; }
  nn::Sequential& net() { return net_; }

  // Index of the layer whose output is the named conv's (post-ReLU) activation.
  std::size_t activation_layer(std::string_view conv_name) const;
  // Number of layers up to and including the pooling of block b (1..5).
  std::size_t block_end(int block) const;

  // Maps [0,1] RGB pixels into the normalized planar input the trunk expects.
  nn::Tensor preprocess(const image::Image& img) const;
  static double input_scale(int channel);  // d(normalized)/d(pixel)

  // Post-ReLU activations for each requested conv layer. The input side must
  // be divisible by 32.
  FeatureMaps extract(const nn::Tensor& input, std::span<const std::string> layer_names) const;

  void load_weights(const std::filesystem::path& path);
  void save_weights(const std::filesystem::path& path) const;

 private:
  int width_divisor_;
  nn::PoolMode pool_mode_ = nn::PoolMode::kMax;
  nn::Sequential net_;
};

FeatureMaps extract_features(const VggBackbone& backbone, const image::Image& img,
                             std::span<const std::string> layer_names);

void check_layer_names(std::span<const std::string> names);

}  // namespace canvas::dam
