#include "concept_canvas/nn/sequential.hpp"

#include "concept_canvas/common/error.hpp"

namespace canvas::nn {

Sequential::Sequential(const Sequential& other) : names_(other.names_), param_offsets_(other.param_offsets_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Layer& Sequential::add(std::unique_ptr<Layer> layer, std::string name) {
  param_offsets_.push_back(parameter_count());
  layers_.push_back(std::move(layer));
  names_.push_back(std::move(name));
  return *layers_.back();
}

std::size_t Sequential::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return npos;
}

Shape Sequential::output_shape(Shape in, std::size_t end) const {
  end = std::min(end, layers_.size());
  for (std::size_t i = 0; i < end; ++i) in = layers_[i]->output_shape(in);
  return in;
}

Tensor Sequential::forward(const Tensor& in, std::size_t end) const {
  end = std::min(end, layers_.size());
  Tensor x = in;
  for (std::size_t i = 0; i < end; ++i) x = layers_[i]->forward(x);
  return x;
}

std::vector<Tensor> Sequential::forward_trace(const Tensor& in, std::size_t end) const {
  std::vector<Tensor> trace;
  trace.push_back(in);
  extend_trace(trace, end);
  return trace;
}

void Sequential::extend_trace(std::vector<Tensor>& trace, std::size_t end) const {
  end = std::min(end, layers_.size());
  for (std::size_t i = trace.size() - 1; i < end; ++i) trace.push_back(layers_[i]->forward(trace.back()));
}

Tensor Sequential::backward(const std::vector<Tensor>& trace, const Tensor& grad_out, Gradients* grads,
                            double scale, std::size_t begin) const {
  if (trace.size() < 2) fail(ErrorKind::kInvalidArgument, "backward: empty trace");
  return backward(trace, std::map<std::size_t, Tensor>{{trace.size() - 2, grad_out}}, grads, scale, begin);
}

Tensor Sequential::backward(const std::vector<Tensor>& trace, const std::map<std::size_t, Tensor>& injected,
                            Gradients* grads, double scale, std::size_t begin) const {
  if (injected.empty()) fail(ErrorKind::kInvalidArgument, "backward: no gradient supplied");
  const std::size_t top = injected.rbegin()->first;
  if (top + 1 >= trace.size()) fail(ErrorKind::kInvalidArgument, "backward: injection beyond trace");
  Tensor g = injected.rbegin()->second;
  for (std::size_t i = top + 1; i-- > begin;) {
    if (i != top) {
      auto it = injected.find(i);
      if (it != injected.end()) g += it->second;
    }
    std::span<std::vector<double>> pg;
    const auto& layer = *layers_[i];
    if (grads != nullptr && !layer.params().empty()) {
      pg = std::span(grads->data() + param_offsets_[i], layer.params().size());
    }
    g = layer.backward(trace[i], trace[i + 1], g, pg, scale);
  }
  return g;
}

std::vector<Param*> Sequential::parameters() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const Param*> Sequential::parameters() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->params().size();
  return n;
}

Gradients Sequential::zero_gradients() const {
  Gradients g;
  for (const auto* p : parameters()) g.emplace_back(p->value.size(), 0.0);
  return g;
}

}  // namespace canvas::nn
