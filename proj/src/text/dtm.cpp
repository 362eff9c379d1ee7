#include "concept_canvas/text/dtm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "concept_canvas/common/error.hpp"

namespace canvas::text {

void to_json(nlohmann::json& j, const DtmConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"l2_penalty", c.l2_penalty}, {"epochs", c.epochs}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DtmConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.l2_penalty = j.at("l2_penalty").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.value("seed", std::uint64_t{0});
}

double DtmModel::logit(std::span<const double> features) const {
  double z = bias;
  for (std::size_t i = 0; i < features.size(); ++i) z += weights[i] * features[i];
  return z;
}

double DtmModel::probability(std::span<const double> features) const {
  return 1.0 / (1.0 + std::exp(-logit(features)));
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> id_order(const DocTermMatrix& matrix) {
  std::vector<std::size_t> order(matrix.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return matrix.row_ids[a] < matrix.row_ids[b]; });
  return order;
}

LossAndGradient loss_in_order(const DocTermMatrix& matrix, std::span<const int> labels,
                              std::span<const double> weights, double bias, double l2,
                              const std::vector<std::size_t>& order) {
  const std::size_t n = matrix.rows();
  const std::size_t v = matrix.cols;
  LossAndGradient out;
  out.grad_weights.assign(v, 0.0);
  for (std::size_t r : order) {
    const double* x = matrix.row(r);
    double z = bias;
    for (std::size_t t = 0; t < v; ++t) z += weights[t] * x[t];
    const double y = labels[r];
    // BCE(y, sigmoid(z)) = softplus(z) - y*z
    out.loss += softplus(z) - y * z;
    const double residual = sigmoid(z) - y;
    for (std::size_t t = 0; t < v; ++t) out.grad_weights[t] += residual * x[t];
    out.grad_bias += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.grad_bias *= inv_n;
  double w2 = 0.0;
  for (std::size_t t = 0; t < v; ++t) {
    out.grad_weights[t] = out.grad_weights[t] * inv_n + l2 * weights[t];
    w2 += weights[t] * weights[t];
  }
  out.loss += 0.5 * l2 * w2;
  return out;
}

void check_inputs(const DocTermMatrix& matrix, std::span<const int> labels) {
  if (matrix.rows() != labels.size()) {
    fail(ErrorKind::kInvalidArgument, "label count " + std::to_string(labels.size()) +
                                          " does not match matrix rows " + std::to_string(matrix.rows()));
  }
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorKind::kInvalidArgument, "labels must be 0 or 1");
    (y ? pos : neg) = true;
  }
  if (!pos || !neg) fail(ErrorKind::kInvalidArgument, "training labels contain a single class");
}

}  // namespace

LossAndGradient logistic_loss(const DocTermMatrix& matrix, std::span<const int> labels,
                              std::span<const double> weights, double bias, double l2_penalty) {
  return loss_in_order(matrix, labels, weights, bias, l2_penalty, id_order(matrix));
}

DtmModel train_dtm(const DocTermMatrix& matrix, std::span<const int> labels, const DtmConfig& config) {
  check_inputs(matrix, labels);
  if (config.epochs < 0 || !(config.learning_rate > 0) || config.l2_penalty < 0) {
    fail(ErrorKind::kInvalidArgument, "invalid DTM training config");
  }
  DtmModel model;
  model.config = config;
  model.weights.assign(matrix.cols, 0.0);
  const auto order = id_order(matrix);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto g = loss_in_order(matrix, labels, model.weights, model.bias, config.l2_penalty, order);
    if (!std::isfinite(g.loss)) {
      fail(ErrorKind::kNumerical, "DTM loss became non-finite at epoch " + std::to_string(epoch),
           {{"epoch", epoch}});
    }
    for (std::size_t t = 0; t < matrix.cols; ++t) model.weights[t] -= config.learning_rate * g.grad_weights[t];
    model.bias -= config.learning_rate * g.grad_bias;
  }
  model.final_loss = loss_in_order(matrix, labels, model.weights, model.bias, config.l2_penalty, order).loss;
  if (!std::isfinite(model.final_loss)) fail(ErrorKind::kNumerical, "DTM final loss is non-finite");
  model.train_accuracy = dtm_accuracy(model, matrix, labels);
  return model;
}

double dtm_accuracy(const DtmModel& model, const DocTermMatrix& matrix, std::span<const int> labels) {
  if (matrix.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    const int predicted = model.logit(std::span(matrix.row(r), matrix.cols)) > 0.0 ? 1 : 0;
    correct += predicted == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(matrix.rows());
}

std::vector<std::string> DiscriminativeTermSet::positive_terms() const {
  std::vector<std::string> out;
  for (const auto& [t, w] : positives) out.push_back(t);
  return out;
}

std::vector<std::string> DiscriminativeTermSet::negative_terms() const {
  std::vector<std::string> out;
  for (const auto& [t, w] : negatives) out.push_back(t);
  return out;
}

void to_json(nlohmann::json& j, const DiscriminativeTermSet& t) {
  auto list = [](const auto& items) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [term, weight] : items) arr.push_back({{"term", term}, {"weight", weight}});
    return arr;
  };
  j = {{"positives", list(t.positives)}, {"negatives", list(t.negatives)}};
}

void from_json(const nlohmann::json& j, DiscriminativeTermSet& t) {
  auto list = [](const nlohmann::json& arr) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& item : arr) out.emplace_back(item.at("term").get<std::string>(), item.value("weight", 0.0));
    return out;
  };
  t.positives = list(j.at("positives"));
  t.negatives = list(j.at("negatives"));
}

DiscriminativeTermSet extract_discriminative_terms(const DtmModel& model, const Vocabulary& vocab,
                                                   std::size_t k_pos, std::size_t k_neg) {
  const std::size_t v = vocab.size();
  if (model.weights.size() != v) fail(ErrorKind::kInvalidArgument, "model/vocabulary size mismatch");
  if (k_pos + k_neg == 0 || k_pos + k_neg > v) {
    fail(ErrorKind::kInvalidArgument, "k_pos + k_neg = " + std::to_string(k_pos + k_neg) +
                                          " out of range for vocabulary of " + std::to_string(v));
  }
  std::vector<std::size_t> idx(v);
  std::iota(idx.begin(), idx.end(), 0);
  auto by_desc = idx;
  std::sort(by_desc.begin(), by_desc.end(), [&](std::size_t a, std::size_t b) {
    if (model.weights[a] != model.weights[b]) return model.weights[a] > model.weights[b];
    return vocab.term(a) < vocab.term(b);
  });
  auto by_asc = idx;
  std::sort(by_asc.begin(), by_asc.end(), [&](std::size_t a, std::size_t b) {
    if (model.weights[a] != model.weights[b]) return model.weights[a] < model.weights[b];
    return vocab.term(a) < vocab.term(b);
  });
  DiscriminativeTermSet out;
  std::vector<bool> taken(v, false);
  for (std::size_t i = 0; i < k_pos; ++i) {
    taken[by_desc[i]] = true;
    out.positives.emplace_back(vocab.term(by_desc[i]), model.weights[by_desc[i]]);
  }
  for (std::size_t i = 0; i < v && out.negatives.size() < k_neg; ++i) {
    if (taken[by_asc[i]]) continue;
    out.negatives.emplace_back(vocab.term(by_asc[i]), model.weights[by_asc[i]]);
  }
  return out;
}

nlohmann::json save_dtm(const DtmModel& model, const Vocabulary& vocab) {
  return {{"vocab_hash", vocab.hash()},
          {"weights", model.weights},
          {"bias", model.bias},
          {"config", model.config},
          {"train_accuracy", model.train_accuracy},
          {"final_loss", model.final_loss}};
}

DtmModel load_dtm(const nlohmann::json& stored, const Vocabulary& vocab) {
  const auto hash = stored.at("vocab_hash").get<std::string>();
  if (hash != vocab.hash()) {
    fail(ErrorKind::kDataError, "DTM model was trained against a different vocabulary",
         {{"expected", hash}, {"actual", vocab.hash()}});
  }
  DtmModel model;
  model.weights = stored.at("weights").get<std::vector<double>>();
  model.bias = stored.at("bias").get<double>();
  model.config = stored.at("config").get<DtmConfig>();
  model.train_accuracy = stored.value("train_accuracy", 0.0);
  model.final_loss = stored.value("final_loss", 0.0);
  if (model.weights.size() != vocab.size()) fail(ErrorKind::kDataError, "DTM weight length mismatch");
  return model;
}

}  // namespace canvas::text
