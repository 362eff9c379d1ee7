#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace canvas::image {

// 8-bit interleaved RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

// PNG or JPEG bytes; throws DataError on undecodable input.
Image decode(std::span<const std::uint8_t> bytes);
// Lossless PNG, fixed compression settings so output bytes are reproducible.
std::vector<std::uint8_t> encode_png(const Image& img);

Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

Image center_crop_square(const Image& img);
// Half-pixel-centred bilinear interpolation; same-size input is copied unchanged.
Image resize_bilinear(const Image& img, int width, int height);
// Center crop to square, then bilinear resize to side x side.
Image normalize_square(const Image& img, int side);

// Planar float conversions, values in [0, 1].
std::vector<double> to_planar(const Image& img);
Image from_planar(std::span<const double> planar, int width, int height);

}  // namespace canvas::image
