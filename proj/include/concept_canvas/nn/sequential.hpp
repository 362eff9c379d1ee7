#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "concept_canvas/nn/layers.hpp"

namespace canvas::nn {

class Sequential {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Layer& add(std::unique_ptr<Layer> layer, std::string name = {});

  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    return static_cast<L&>(add(std::make_unique<L>(std::forward<Args>(args)...), std::move(name)));
  }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  // npos when no layer carries that name.
  std::size_t find(const std::string& name) const;

  Shape output_shape(Shape in, std::size_t end = npos) const;
  Tensor forward(const Tensor& in, std::size_t end = npos) const;
  // trace[0] is the input; trace[i + 1] is the output of layer i, for layers [0, end).
  std::vector<Tensor> forward_trace(const Tensor& in, std::size_t end = npos) const;
  // Continues a trace from its last entry through layers [trace.size() - 1, end).
  void extend_trace(std::vector<Tensor>& trace, std::size_t end = npos) const;

  // Backpropagates grad_out (at the trace's final output) down to the input
  // of layer `begin`; returns dLoss/d(trace[begin]).
  Tensor backward(const std::vector<Tensor>& trace, const Tensor& grad_out, Gradients* grads, double scale = 1.0,
                  std::size_t begin = 0) const;
  // Same, with gradients injected at the outputs of several layers
  // (layer index -> gradient at that layer's output).
  Tensor backward(const std::vector<Tensor>& trace, const std::map<std::size_t, Tensor>& injected, Gradients* grads,
                  double scale = 1.0, std::size_t begin = 0) const;

  // Flattened parameter list in layer order.
  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  std::size_t parameter_count() const;
  Gradients zero_gradients() const;
  std::size_t first_param_index(std::size_t layer) const { return param_offsets_.at(layer); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> names_;
  std::vector<std::size_t> param_offsets_;
};

}  // namespace canvas::nn
