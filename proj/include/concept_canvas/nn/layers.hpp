#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "concept_canvas/common/rng.hpp"
#include "concept_canvas/nn/tensor.hpp"

namespace canvas::nn {

struct Param {
  std::string name;
  std::vector<int> dims;
  std::vector<double> value;
};

// Per-parameter gradient buffers, aligned with a network's parameter list.
using Gradients = std::vector<std::vector<double>>;

// A differentiable stage. forward() is const so a trained network can be
// shared between threads; backward() receives the cached input and output
// explicitly and accumulates scale * dLoss/dParam into `param_grads`
// (an empty span skips parameter gradients).
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& in) const = 0;
  virtual Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out,
                          std::span<std::vector<double>> param_grads, double scale) const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

 protected:
  std::vector<Param> params_;
};

// 3x3 convolution, stride 1, zero padding 1.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(int in_channels, int out_channels);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  void init_he(Rng& rng);

  std::string kind() const override { return "conv3x3"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out,
                  std::span<std::vector<double>> param_grads, double scale) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }

 private:
  int in_;
  int out_;
};

// Fully connected over the flattened input; output shape (out, 1, 1).
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);
  void init_he(Rng& rng, double gain = 2.0);

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out,
                  std::span<std::vector<double>> param_grads, double scale) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

 private:
  int in_;
  int out_;
};

class Relu final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(); }
};

// alpha = 1
class Elu final : public Layer {
 public:
  std::string kind() const override { return "elu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Elu>(); }
};

class Sigmoid final : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(); }
};

enum class PoolMode { kMax, kAverage };

// 2x2 window, stride 2. The mode is switchable after construction so one
// set of weights can serve both the classifier and the style path.
class Pool2 final : public Layer {
 public:
  explicit Pool2(PoolMode mode) : mode_(mode) {}
  PoolMode mode() const { return mode_; }
  void set_mode(PoolMode mode) { mode_ = mode; }

  std::string kind() const override { return mode_ == PoolMode::kMax ? "maxpool2" : "avgpool2"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Pool2>(mode_); }

 private:
  PoolMode mode_;
};

// Nearest-neighbour x2.
class Upsample2 final : public Layer {
 public:
  std::string kind() const override { return "upsample2"; }
  Shape output_shape(const Shape& in) const override { return {in.channels, in.height * 2, in.width * 2}; }
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample2>(); }
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& in) const override { return {in.channels, 1, 1}; }
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(); }
};

class Reshape final : public Layer {
 public:
  explicit Reshape(Shape target) : target_(target) {}
  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in) const override;
  Tensor backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, std::span<std::vector<double>>,
                  double) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(target_); }

 private:
  Shape target_;
};

}  // namespace canvas::nn
