#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace canvas::nn {

// Channel-major (C, H, W) extent of a single activation map.
struct Shape {
  int channels = 0;
  int height = 1;
  int width = 1;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense double-precision activation map for one sample.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<const double> channel(int c) const { return {data_.data() + c * shape_.plane(), shape_.plane()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int c, int y, int x) { return data_[(c * static_cast<std::size_t>(shape_.height) + y) * shape_.width + x]; }
  double at(int c, int y, int x) const {
    return data_[(c * static_cast<std::size_t>(shape_.height) + y) * shape_.width + x];
  }

  // Same data, new extent of equal size.
  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace canvas::nn
