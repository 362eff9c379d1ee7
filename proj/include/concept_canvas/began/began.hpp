#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/common/rng.hpp"
#include "concept_canvas/image/record.hpp"
#include "concept_canvas/nn/adam.hpp"
#include "concept_canvas/nn/sequential.hpp"

namespace canvas::began {

inline constexpr int kLatentDim = 100;

// Generator input: kLatentDim components drawn uniformly from [-1, 1].
struct LatentVector {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;

  static LatentVector sample(std::uint64_t seed, std::uint64_t index);
  void validate() const;
};

void to_json(nlohmann::json& j, const LatentVector& z);
void from_json(const nlohmann::json& j, LatentVector& z);

struct BeganConfig {
  int iterations = 17000;
  int batch_size = 16;
  int image_side = 128;
  double learning_rate = 1e-4;
  double gamma = 0.5;
  double lambda_k = 1e-3;
  double k_initial = 0.0;
  int filters = 64;         // n: channel width of every conv
  int embedding_dim = 64;   // discriminator bottleneck
  int checkpoint_interval = 500;
  double adam_beta1 = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const BeganConfig& c);
void from_json(const nlohmann::json& j, BeganConfig& c);

// Proportional control of the real/fake balance, clamped to [0, 1]:
// k' = clamp(k + lambda_k * (gamma * loss_real - loss_fake), 0, 1).
double update_k(double k, double lambda_k, double gamma, double loss_real, double loss_fake);
// loss_real + |gamma * loss_real - loss_fake|
double convergence_measure(double gamma, double loss_real, double loss_fake);
// mean |v - reconstruction|
double reconstruction_loss(const nn::Tensor& v, const nn::Tensor& reconstruction);

// Decoder shared by the generator and the discriminator's back half:
// linear -> 8x8xn, two elu convs per resolution, nearest-neighbour doubling
// up to `side`, then a 3-channel conv and a sigmoid.
nn::Sequential build_decoder(int input_dim, int filters, int side, Rng& rng);
// Mirrored encoder down to an `embedding_dim` vector.
nn::Sequential build_encoder(int embedding_dim, int filters, int side, Rng& rng);

class BeganModel {
 public:
  explicit BeganModel(const BeganConfig& config);

  const BeganConfig& config() const { return config_; }
  const nn::Sequential& generator() const { return generator_; }
  nn::Sequential& generator() { return generator_; }
  // Autoencoder: encoder layers followed by decoder layers.
  const nn::Sequential& discriminator() const { return discriminator_; }
  nn::Sequential& discriminator() { return discriminator_; }

  nn::Tensor generate_tensor(const LatentVector& z) const;
  image::Image generate(const LatentVector& z) const;
  nn::Tensor reconstruct(const nn::Tensor& v) const { return discriminator_.forward(v); }

  void save(const std::filesystem::path& dir) const;
  static BeganModel load(const std::filesystem::path& dir);

 private:
  BeganConfig config_;
  nn::Sequential generator_;
  nn::Sequential discriminator_;
};

struct StepRecord {
  int iteration = 0;
  double loss_real = 0.0;
  double loss_fake = 0.0;
  double k = 0.0;
  double m_global = 0.0;
};

std::string history_csv(const std::vector<StepRecord>& history);

struct TrainOptions {
  // When set, checkpoints go to <dir>/ckpt-<iter> and training resumes from
  // the latest one found there.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Polled after each iteration; returning true stops training early.
  std::function<bool(int iteration)> should_stop;
  std::function<void(const StepRecord&)> on_step;
  int keep_checkpoints = 2;
};

struct TrainResult {
  BeganModel model;
  std::vector<StepRecord> history;
  double k = 0.0;
  int iterations_done = 0;
  int resumed_from = 0;
  bool completed = false;
};

TrainResult train_began(const std::vector<image::ImageRecord>& dataset, const BeganConfig& config,
                        const TrainOptions& options = {});

// Latest checkpoint iteration in a directory, or 0.
int latest_checkpoint(const std::filesystem::path& dir);

struct Candidate {
  image::ImageRecord record;  // provenance GENERATED, id = hash of its PNG bytes
  LatentVector z;
};

std::vector<Candidate> sample_candidates(const BeganModel& model, std::size_t count, std::uint64_t seed);

}  // namespace canvas::began
