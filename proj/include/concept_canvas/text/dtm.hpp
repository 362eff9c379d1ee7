#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/text/corpus.hpp"

namespace canvas::text {

struct DtmConfig {
  double learning_rate = 0.1;
  double l2_penalty = 1e-3;
  int epochs = 500;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const DtmConfig& c);
void from_json(const nlohmann::json& j, DtmConfig& c);

// Linear theme classifier over tf/idf columns.
struct DtmModel {
  std::vector<double> weights;
  double bias = 0.0;
  DtmConfig config;
  double train_accuracy = 0.0;
  double final_loss = 0.0;

  double logit(std::span<const double> features) const;
  double probability(std::span<const double> features) const;
};

// Mean binary cross-entropy plus (l2/2)*|w|^2; the bias is not penalized.
struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

LossAndGradient logistic_loss(const DocTermMatrix& matrix, std::span<const int> labels,
                              std::span<const double> weights, double bias, double l2_penalty);

// Full-batch gradient descent from zero weights. Rows are visited in
// document-id order, so the result is independent of row order.
DtmModel train_dtm(const DocTermMatrix& matrix, std::span<const int> labels, const DtmConfig& config);

double dtm_accuracy(const DtmModel& model, const DocTermMatrix& matrix, std::span<const int> labels);

struct DiscriminativeTermSet {
  std::vector<std::pair<std::string, double>> positives;  // weight descending
  std::vector<std::pair<std::string, double>> negatives;  // weight ascending

  std::vector<std::string> positive_terms() const;
  std::vector<std::string> negative_terms() const;
};

void to_json(nlohmann::json& j, const DiscriminativeTermSet& t);
void from_json(const nlohmann::json& j, DiscriminativeTermSet& t);

// Ties are broken by the lexicographically smaller term.
DiscriminativeTermSet extract_discriminative_terms(const DtmModel& model, const Vocabulary& vocab,
                                                   std::size_t k_pos = 15, std::size_t k_neg = 15);

nlohmann::json save_dtm(const DtmModel& model, const Vocabulary& vocab);
// Rejects a model saved against a different vocabulary.
DtmModel load_dtm(const nlohmann::json& stored, const Vocabulary& vocab);

}  // namespace canvas::text
