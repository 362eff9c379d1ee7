#include "concept_canvas/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "concept_canvas/common/error.hpp"

namespace canvas::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

void check_channels(const Shape& in, int expected, const char* who) {
  if (in.channels != expected) {
    fail(ErrorKind::kInvalidArgument,
         std::string(who) + ": expected " + std::to_string(expected) + " channels, got " + in.str());
  }
}

}  // namespace

std::string Shape::str() const {
  return "(" + std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width) + ")";
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) fail(ErrorKind::kInvalidArgument, "tensor data does not match " + shape.str());
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != data_.size()) fail(ErrorKind::kInvalidArgument, "cannot reshape " + shape_.str() + " to " + shape.str());
  return Tensor(shape, data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(other.shape_ == shape_)) fail(ErrorKind::kInvalidArgument, "tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

// ---------------------------------------------------------------------------
// Conv3x3
//
// The input is copied into a zero-padded (H+2)x(W+2) plane per channel. On
// that padded grid, each of the nine kernel taps is a constant offset into
// the flattened plane, so the convolution becomes nine GEMMs against strided
// views of the same buffer. Outputs are computed for H*(W+2) positions and
// the two wrap-around columns per row are discarded.

Conv3x3::Conv3x3(int in_channels, int out_channels) : in_(in_channels), out_(out_channels) {
  params_.push_back({"weight", {9, out_, in_}, std::vector<double>(9 * static_cast<std::size_t>(out_) * in_, 0.0)});
  params_.push_back({"bias", {out_}, std::vector<double>(out_, 0.0)});
}

void Conv3x3::init_he(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (9.0 * in_));
  for (auto& w : params_[0].value) w = rng.normal() * stddev;
  std::fill(params_[1].value.begin(), params_[1].value.end(), 0.0);
}

Shape Conv3x3::output_shape(const Shape& in) const {
  check_channels(in, in_, "conv3x3");
  return {out_, in.height, in.width};
}

Tensor Conv3x3::forward(const Tensor& in) const {
  check_channels(in.shape(), in_, "conv3x3");
  const int h = in.height(), w = in.width();
  const int wp = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h + 2) * wp;
  const Eigen::Index span = static_cast<Eigen::Index>(h) * wp;

  std::vector<double> padded(static_cast<std::size_t>(in_) * plane + 2, 0.0);
  for (int c = 0; c < in_; ++c) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(&in.data()[(static_cast<std::size_t>(c) * h + y) * w], w, &padded[c * plane + (y + 1) * wp + 1]);
    }
  }
  RowMatrix acc(out_, span);
  const auto& bias = params_[1].value;
  for (int o = 0; o < out_; ++o) acc.row(o).setConstant(bias[o]);
  const double* weights = params_[0].value.data();
  for (int k = 0; k < 9; ++k) {
    const std::size_t offset = static_cast<std::size_t>(k / 3) * wp + (k % 3);
    ConstStridedMap x(padded.data() + offset, in_, span, Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
    ConstMatrixMap wk(weights + static_cast<std::size_t>(k) * out_ * in_, out_, in_);
    acc.noalias() += wk * x;
  }
  Tensor out({out_, h, w});
  for (int o = 0; o < out_; ++o) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(acc.data() + static_cast<std::size_t>(o) * span + static_cast<std::size_t>(y) * wp, w,
                  &out.data()[(static_cast<std::size_t>(o) * h + y) * w]);
    }
  }
  return out;
}

Tensor Conv3x3::backward(const Tensor& in, const Tensor& /*out*/, const Tensor& grad_out,
                         std::span<std::vector<double>> param_grads, double scale) const {
  const int h = in.height(), w = in.width();
  const int wp = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h + 2) * wp;
  const Eigen::Index span = static_cast<Eigen::Index>(h) * wp;

  RowMatrix g = RowMatrix::Zero(out_, span);
  for (int o = 0; o < out_; ++o) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(&grad_out.data()[(static_cast<std::size_t>(o) * h + y) * w], w,
                  g.data() + static_cast<std::size_t>(o) * span + static_cast<std::size_t>(y) * wp);
    }
  }
  const double* weights = params_[0].value.data();
  std::vector<double> padded_grad(static_cast<std::size_t>(in_) * plane + 2, 0.0);

  if (!param_grads.empty()) {
    std::vector<double> padded(static_cast<std::size_t>(in_) * plane + 2, 0.0);
    for (int c = 0; c < in_; ++c) {
      for (int y = 0; y < h; ++y) {
        std::copy_n(&in.data()[(static_cast<std::size_t>(c) * h + y) * w], w, &padded[c * plane + (y + 1) * wp + 1]);
      }
    }
    auto& dw = param_grads[0];
    auto& db = param_grads[1];
    for (int k = 0; k < 9; ++k) {
      const std::size_t offset = static_cast<std::size_t>(k / 3) * wp + (k % 3);
      ConstStridedMap x(padded.data() + offset, in_, span, Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
      MatrixMap dwk(dw.data() + static_cast<std::size_t>(k) * out_ * in_, out_, in_);
      dwk.noalias() += scale * (g * x.transpose());
    }
    for (int o = 0; o < out_; ++o) db[o] += scale * g.row(o).sum();
  }
  for (int k = 0; k < 9; ++k) {
    const std::size_t offset = static_cast<std::size_t>(k / 3) * wp + (k % 3);
    StridedMap dx(padded_grad.data() + offset, in_, span, Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
    ConstMatrixMap wk(weights + static_cast<std::size_t>(k) * out_ * in_, out_, in_);
    dx.noalias() += wk.transpose() * g;
  }
  Tensor grad_in(in.shape());
  for (int c = 0; c < in_; ++c) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(&padded_grad[c * plane + (y + 1) * wp + 1], w, &grad_in.data()[(static_cast<std::size_t>(c) * h + y) * w]);
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_features, int out_features) : in_(in_features), out_(out_features) {
  params_.push_back({"weight", {out_, in_}, std::vector<double>(static_cast<std::size_t>(out_) * in_, 0.0)});
  params_.push_back({"bias", {out_}, std::vector<double>(out_, 0.0)});
}

void Linear::init_he(Rng& rng, double gain) {
  const double stddev = std::sqrt(gain / in_);
  for (auto& w : params_[0].value) w = rng.normal() * stddev;
  std::fill(params_[1].value.begin(), params_[1].value.end(), 0.0);
}

Shape Linear::output_shape(const Shape& in) const {
  if (static_cast<int>(in.size()) != in_) {
    fail(ErrorKind::kInvalidArgument, "linear: expected " + std::to_string(in_) + " inputs, got " + in.str());
  }
  return {out_, 1, 1};
}

Tensor Linear::forward(const Tensor& in) const {
  output_shape(in.shape());
  Tensor out({out_, 1, 1});
  ConstMatrixMap wm(params_[0].value.data(), out_, in_);
  Eigen::Map<const Eigen::VectorXd> x(in.data(), in_);
  Eigen::Map<const Eigen::VectorXd> b(params_[1].value.data(), out_);
  Eigen::Map<Eigen::VectorXd>(out.data(), out_) = wm * x + b;
  return out;
}

Tensor Linear::backward(const Tensor& in, const Tensor& /*out*/, const Tensor& grad_out,
                        std::span<std::vector<double>> param_grads, double scale) const {
  ConstMatrixMap wm(params_[0].value.data(), out_, in_);
  Eigen::Map<const Eigen::VectorXd> x(in.data(), in_);
  Eigen::Map<const Eigen::VectorXd> g(grad_out.data(), out_);
  if (!param_grads.empty()) {
    MatrixMap(param_grads[0].data(), out_, in_).noalias() += scale * (g * x.transpose());
    Eigen::Map<Eigen::VectorXd>(param_grads[1].data(), out_) += scale * g;
  }
  Tensor grad_in(in.shape());
  Eigen::Map<Eigen::VectorXd>(grad_in.data(), in_).noalias() = wm.transpose() * g;
  return grad_in;
}

// ---------------------------------------------------------------------------
// Pointwise activations

Tensor Relu::forward(const Tensor& in) const {
  Tensor out = in;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor Relu::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, std::span<std::vector<double>>,
                      double) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(in[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor Elu::forward(const Tensor& in) const {
  Tensor out = in;
  for (auto& v : out.values()) v = v > 0.0 ? v : std::expm1(v);
  return out;
}

Tensor Elu::backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                     double) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(in[i] > 0.0)) g[i] *= out[i] + 1.0;
  }
  return g;
}

Tensor Sigmoid::forward(const Tensor& in) const {
  Tensor out = in;
  for (auto& v : out.values()) {
    if (v >= 0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Tensor Sigmoid::backward(const Tensor&, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                         double) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0 - out[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Pooling and resampling

Shape Pool2::output_shape(const Shape& in) const {
  if (in.height % 2 != 0 || in.width % 2 != 0) {
    fail(ErrorKind::kInvalidArgument, "pool2: spatial size must be even, got " + in.str());
  }
  return {in.channels, in.height / 2, in.width / 2};
}

Tensor Pool2::forward(const Tensor& in) const {
  const Shape os = output_shape(in.shape());
  Tensor out(os);
  for (int c = 0; c < os.channels; ++c) {
    for (int y = 0; y < os.height; ++y) {
      for (int x = 0; x < os.width; ++x) {
        const double a = in.at(c, 2 * y, 2 * x), b = in.at(c, 2 * y, 2 * x + 1);
        const double d = in.at(c, 2 * y + 1, 2 * x), e = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = mode_ == PoolMode::kMax ? std::max(std::max(a, b), std::max(d, e)) : 0.25 * (a + b + d + e);
      }
    }
  }
  return out;
}

Tensor Pool2::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, std::span<std::vector<double>>,
                       double) const {
  Tensor g(in.shape());
  const Shape& os = grad_out.shape();
  for (int c = 0; c < os.channels; ++c) {
    for (int y = 0; y < os.height; ++y) {
      for (int x = 0; x < os.width; ++x) {
        const double go = grad_out.at(c, y, x);
        if (mode_ == PoolMode::kAverage) {
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) g.at(c, 2 * y + dy, 2 * x + dx) += 0.25 * go;
          }
        } else {
          int by = 0, bx = 0;
          double best = in.at(c, 2 * y, 2 * x);
          for (int k = 1; k < 4; ++k) {
            const double v = in.at(c, 2 * y + k / 2, 2 * x + k % 2);
            if (v > best) {
              best = v;
              by = k / 2;
              bx = k % 2;
            }
          }
          g.at(c, 2 * y + by, 2 * x + bx) += go;
        }
      }
    }
  }
  return g;
}

Tensor Upsample2::forward(const Tensor& in) const {
  Tensor out(output_shape(in.shape()));
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    }
  }
  return out;
}

Tensor Upsample2::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, std::span<std::vector<double>>,
                           double) const {
  Tensor g(in.shape());
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int y = 0; y < grad_out.height(); ++y) {
      for (int x = 0; x < grad_out.width(); ++x) g.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
    }
  }
  return g;
}

Tensor GlobalAvgPool::forward(const Tensor& in) const {
  Tensor out({in.channels(), 1, 1});
  const double inv = 1.0 / static_cast<double>(in.shape().plane());
  for (int c = 0; c < in.channels(); ++c) {
    double s = 0.0;
    for (double v : in.channel(c)) s += v;
    out[c] = s * inv;
  }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& in, const Tensor&, const Tensor& grad_out,
                               std::span<std::vector<double>>, double) const {
  Tensor g(in.shape());
  const std::size_t plane = in.shape().plane();
  const double inv = 1.0 / static_cast<double>(plane);
  for (int c = 0; c < in.channels(); ++c) {
    std::fill_n(g.data() + c * plane, plane, grad_out[c] * inv);
  }
  return g;
}

Shape Reshape::output_shape(const Shape& in) const {
  if (in.size() != target_.size()) fail(ErrorKind::kInvalidArgument, "reshape: " + in.str() + " -> " + target_.str());
  return target_;
}

Tensor Reshape::forward(const Tensor& in) const { return in.reshaped(output_shape(in.shape())); }

Tensor Reshape::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, std::span<std::vector<double>>,
                         double) const {
  return grad_out.reshaped(in.shape());
}

}  // namespace canvas::nn
