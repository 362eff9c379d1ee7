#include "concept_canvas/image/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"

namespace canvas::image {

Image decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(ErrorKind::kDataError, "cannot decode empty image buffer");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::kDataError, std::string("image decode failed: ") + e.what());
  }
  if (bgr.empty()) fail(ErrorKind::kDataError, "image decode failed");
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(x, y, 0) = row[3 * x + 2];
      img.at(x, y, 1) = row[3 * x + 1];
      img.at(x, y, 2) = row[3 * x + 0];
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.empty()) fail(ErrorKind::kInvalidArgument, "cannot encode empty image");
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      row[3 * x + 0] = img.at(x, y, 2);
      row[3 * x + 1] = img.at(x, y, 1);
      row[3 * x + 2] = img.at(x, y, 0);
    }
  }
  std::vector<std::uint8_t> out;
  cv::imencode(".png", bgr, out, {cv::IMWRITE_PNG_COMPRESSION, 6});
  return out;
}

Image read_image(const std::filesystem::path& path) { return decode(read_bytes(path)); }

void write_png(const std::filesystem::path& path, const Image& img) { write_bytes_atomic(path, encode_png(img)); }

Image center_crop_square(const Image& img) {
  const int side = std::min(img.width, img.height);
  if (side == img.width && side == img.height) return img;
  const int x0 = (img.width - side) / 2;
  const int y0 = (img.height - side) / 2;
  Image out(side, side);
  for (int y = 0; y < side; ++y) {
    std::copy_n(&img.rgb[((static_cast<std::size_t>(y0 + y)) * img.width + x0) * 3], side * 3,
                &out.rgb[static_cast<std::size_t>(y) * side * 3]);
  }
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorKind::kInvalidArgument, "resize target must be positive");
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        const double bottom = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image normalize_square(const Image& img, int side) {
  if (side <= 0) fail(ErrorKind::kInvalidArgument, "normalize side must be positive");
  return resize_bilinear(center_crop_square(img), side, side);
}

std::vector<double> to_planar(const Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) out[c * plane + i] = img.rgb[i * 3 + c] / 255.0;
  }
  return out;
}

Image from_planar(std::span<const double> planar, int width, int height) {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (planar.size() != plane * 3) fail(ErrorKind::kInvalidArgument, "planar buffer size mismatch");
  Image img(width, height);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      img.rgb[i * 3 + c] =
          static_cast<std::uint8_t>(std::lround(std::clamp(planar[c * plane + i], 0.0, 1.0) * 255.0));
    }
  }
  return img;
}

}  // namespace canvas::image
