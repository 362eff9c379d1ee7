#include "concept_canvas/began/began.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/nn/weights_io.hpp"

namespace canvas::began {
namespace fs = std::filesystem;

LatentVector LatentVector::sample(std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng::derive(seed, 0x7a7a, index);
  LatentVector z;
  z.seed = seed;
  z.index = index;
  z.values.resize(kLatentDim);
  for (auto& v : z.values) v = rng.uniform(-1.0, 1.0);
  return z;
}

void LatentVector::validate() const {
  if (values.size() != kLatentDim) {
    fail(ErrorKind::kInvalidArgument,
         "latent vector must have " + std::to_string(kLatentDim) + " components, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!(v >= -1.0 && v <= 1.0)) fail(ErrorKind::kInvalidArgument, "latent component outside [-1, 1]");
  }
}

void to_json(nlohmann::json& j, const LatentVector& z) {
  j = {{"values", z.values}, {"seed", z.seed}, {"index", z.index}};
}

void from_json(const nlohmann::json& j, LatentVector& z) {
  z.values = j.at("values").get<std::vector<double>>();
  z.seed = j.value("seed", std::uint64_t{0});
  z.index = j.value("index", std::uint64_t{0});
}

void BeganConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidArgument, "began: " + m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) bad("gamma must be in (0, 1]");
  if (!(lambda_k > 0.0)) bad("lambda_k must be positive");
  if (image_side < 32 || (image_side & (image_side - 1)) != 0) bad("image_side must be a power of two >= 32");
  if (iterations < 0 || batch_size < 1) bad("invalid schedule");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(k_initial >= 0.0 && k_initial <= 1.0)) bad("k_initial must be in [0, 1]");
  if (filters < 1 || embedding_dim < 1) bad("filters and embedding_dim must be positive");
  if (checkpoint_interval < 1) bad("checkpoint_interval must be positive");
}

void to_json(nlohmann::json& j, const BeganConfig& c) {
  j = {{"iterations", c.iterations},
       {"batch_size", c.batch_size},
       {"image_side", c.image_side},
       {"learning_rate", c.learning_rate},
       {"gamma", c.gamma},
       {"lambda_k", c.lambda_k},
       {"k_initial", c.k_initial},
       {"filters", c.filters},
       {"embedding_dim", c.embedding_dim},
       {"checkpoint_interval", c.checkpoint_interval},
       {"adam_beta1", c.adam_beta1},
       {"seed", c.seed},
       {"z_dim", kLatentDim}};
}

void from_json(const nlohmann::json& j, BeganConfig& c) {
  c.iterations = j.at("iterations").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.image_side = j.at("image_side").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.lambda_k = j.at("lambda_k").get<double>();
  c.k_initial = j.at("k_initial").get<double>();
  c.filters = j.at("filters").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

double update_k(double k, double lambda_k, double gamma, double loss_real, double loss_fake) {
  const double next = k + lambda_k * (gamma * loss_real - loss_fake);
  if (std::isnan(next)) return std::clamp(k, 0.0, 1.0);
  return std::clamp(next, 0.0, 1.0);
}

double convergence_measure(double gamma, double loss_real, double loss_fake) {
  return loss_real + std::abs(gamma * loss_real - loss_fake);
}

double reconstruction_loss(const nn::Tensor& v, const nn::Tensor& reconstruction) {
  if (!(v.shape() == reconstruction.shape())) fail(ErrorKind::kInvalidArgument, "reconstruction shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::abs(v[i] - reconstruction[i]);
  return s / static_cast<double>(v.size());
}

namespace {

int doublings(int side) {
  int n = 0;
  for (int s = 8; s < side; s *= 2) ++n;
  return n;
}

void conv_pair(nn::Sequential& net, const std::string& tag, int filters, Rng& rng) {
  for (int i = 1; i <= 2; ++i) {
    net.emplace<nn::Conv3x3>(tag + "_conv" + std::to_string(i), filters, filters).init_he(rng);
    net.emplace<nn::Elu>(tag + "_elu" + std::to_string(i));
  }
}

}  // namespace

nn::Sequential build_decoder(int input_dim, int filters, int side, Rng& rng) {
  nn::Sequential net;
  net.emplace<nn::Linear>("fc", input_dim, 8 * 8 * filters).init_he(rng, 1.0);
  net.emplace<nn::Reshape>("to_map", nn::Shape{filters, 8, 8});
  conv_pair(net, "dec8", filters, rng);
  int s = 8;
  for (int i = 0; i < doublings(side); ++i) {
    s *= 2;
    net.emplace<nn::Upsample2>("up" + std::to_string(s));
    conv_pair(net, "dec" + std::to_string(s), filters, rng);
  }
  net.emplace<nn::Conv3x3>("to_rgb", filters, 3).init_he(rng);
  net.emplace<nn::Sigmoid>("sigmoid");
  return net;
}

nn::Sequential build_encoder(int embedding_dim, int filters, int side, Rng& rng) {
  nn::Sequential net;
  net.emplace<nn::Conv3x3>("from_rgb", 3, filters).init_he(rng);
  net.emplace<nn::Elu>("from_rgb_elu");
  for (int s = side; s > 8; s /= 2) {
    conv_pair(net, "enc" + std::to_string(s), filters, rng);
    net.emplace<nn::Pool2>("down" + std::to_string(s), nn::PoolMode::kAverage);
  }
  conv_pair(net, "enc8", filters, rng);
  net.emplace<nn::Linear>("embed", 8 * 8 * filters, embedding_dim).init_he(rng, 1.0);
  return net;
}

BeganModel::BeganModel(const BeganConfig& config) : config_(config) {
  config_.validate();
  Rng g_rng = Rng::derive(config.seed, 0x6e6e, 1);
  Rng d_rng = Rng::derive(config.seed, 0x6e6e, 2);
  generator_ = build_decoder(kLatentDim, config.filters, config.image_side, g_rng);
  discriminator_ = build_encoder(config.embedding_dim, config.filters, config.image_side, d_rng);
  nn::Sequential decoder = build_decoder(config.embedding_dim, config.filters, config.image_side, d_rng);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    discriminator_.add(decoder.layer(i).clone(), "d_" + decoder.name(i));
  }
}

nn::Tensor BeganModel::generate_tensor(const LatentVector& z) const {
  z.validate();
  return generator_.forward(nn::Tensor({kLatentDim, 1, 1}, z.values));
}

image::Image BeganModel::generate(const LatentVector& z) const {
  const auto t = generate_tensor(z);
  return image::from_planar(t.values(), t.width(), t.height());
}

void BeganModel::save(const fs::path& dir) const {
  fs::create_directories(dir);
  auto arrays = nn::export_params(generator_, "generator.");
  auto d = nn::export_params(discriminator_, "discriminator.");
  arrays.insert(arrays.end(), d.begin(), d.end());
  nn::save_arrays(dir / "weights.bin", arrays);
  write_json_atomic(dir / "config.json", nlohmann::json(config_));
}

BeganModel BeganModel::load(const fs::path& dir) {
  BeganModel model(read_json(dir / "config.json").get<BeganConfig>());
  const auto arrays = nn::load_arrays(dir / "weights.bin");
  nn::import_params(model.generator_, arrays, "generator.");
  nn::import_params(model.discriminator_, arrays, "discriminator.");
  return model;
}

std::string history_csv(const std::vector<StepRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "iter,L_real,L_fake,k_t,m_global\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << r.loss_real << ',' << r.loss_fake << ',' << r.k << ',' << r.m_global << '\n';
  }
  return out.str();
}

namespace {

std::vector<StepRecord> parse_history(const std::string& csv) {
  std::vector<StepRecord> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepRecord r;
    char comma;
    std::istringstream row(line);
    row >> r.iteration >> comma >> r.loss_real >> comma >> r.loss_fake >> comma >> r.k >> comma >> r.m_global;
    out.push_back(r);
  }
  return out;
}

fs::path checkpoint_path(const fs::path& dir, int iteration) { return dir / ("ckpt-" + std::to_string(iteration)); }

void append_optimizer(std::vector<nn::NamedArray>& arrays, nn::Adam& adam, const std::string& prefix) {
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    arrays.push_back({prefix + "m" + std::to_string(i), {static_cast<int>(m[i].size())}, m[i]});
    arrays.push_back({prefix + "v" + std::to_string(i), {static_cast<int>(v[i].size())}, v[i]});
  }
}

void restore_optimizer(const std::vector<nn::NamedArray>& arrays, nn::Adam& adam, const std::string& prefix) {
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  auto find = [&](const std::string& name) -> const std::vector<double>& {
    for (const auto& a : arrays) {
      if (a.name == name) return a.values;
    }
    fail(ErrorKind::kDataError, "checkpoint is missing optimizer state '" + name + "'");
  };
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = find(prefix + "m" + std::to_string(i));
    v[i] = find(prefix + "v" + std::to_string(i));
  }
}

struct Trainer {
  BeganModel model;
  nn::Adam g_opt;
  nn::Adam d_opt;
  double k;
  int iteration = 0;
  std::vector<StepRecord> history;

  explicit Trainer(const BeganConfig& config)
      : model(config),
        g_opt(nn::Adam::for_params({.learning_rate = config.learning_rate, .beta1 = config.adam_beta1},
                                   model.generator().parameters())),
        d_opt(nn::Adam::for_params({.learning_rate = config.learning_rate, .beta1 = config.adam_beta1},
                                   model.discriminator().parameters())),
        k(config.k_initial) {}

  void save(const fs::path& dir) const {
    const fs::path target = checkpoint_path(dir, iteration);
    const fs::path staging = dir / (".staging-ckpt-" + std::to_string(iteration));
    fs::remove_all(staging);
    model.save(staging);
    std::vector<nn::NamedArray> opt;
    append_optimizer(opt, const_cast<nn::Adam&>(g_opt), "g_opt.");
    append_optimizer(opt, const_cast<nn::Adam&>(d_opt), "d_opt.");
    nn::save_arrays(staging / "optimizer.bin", opt);
    write_json_atomic(staging / "state.json", {{"iteration", iteration},
                                               {"k", k},
                                               {"g_steps", g_opt.steps()},
                                               {"d_steps", d_opt.steps()}});
    write_text_atomic(staging / "history.csv", history_csv(history));
    fs::remove_all(target);
    fs::rename(staging, target);
  }

  void restore(const fs::path& ckpt) {
    const auto state = read_json(ckpt / "state.json");
    const BeganConfig saved = read_json(ckpt / "config.json").get<BeganConfig>();
    if (nlohmann::json(saved).dump() != nlohmann::json(model.config()).dump()) {
      // The schedule length may differ; architecture and optimizer settings may not.
      BeganConfig a = saved, b = model.config();
      a.iterations = b.iterations = 0;
      if (nlohmann::json(a).dump() != nlohmann::json(b).dump()) {
        fail(ErrorKind::kDataError, "checkpoint " + ckpt.string() + " was written with a different BEGAN config");
      }
    }
    const auto arrays = nn::load_arrays(ckpt / "weights.bin");
    nn::import_params(model.generator(), arrays, "generator.");
    nn::import_params(model.discriminator(), arrays, "discriminator.");
    const auto opt = nn::load_arrays(ckpt / "optimizer.bin");
    restore_optimizer(opt, g_opt, "g_opt.");
    restore_optimizer(opt, d_opt, "d_opt.");
    g_opt.set_steps(state.at("g_steps").get<std::int64_t>());
    d_opt.set_steps(state.at("d_steps").get<std::int64_t>());
    iteration = state.at("iteration").get<int>();
    k = state.at("k").get<double>();
    history = parse_history(read_text(ckpt / "history.csv"));
  }
};

void prune_checkpoints(const fs::path& dir, int keep) {
  std::vector<int> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("ckpt-", 0) == 0) found.push_back(std::stoi(name.substr(5)));
  }
  std::sort(found.begin(), found.end());
  for (std::size_t i = 0; i + static_cast<std::size_t>(keep) < found.size(); ++i) {
    fs::remove_all(checkpoint_path(dir, found[i]));
  }
}

}  // namespace

int latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return 0;
  int best = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("ckpt-", 0) != 0) continue;
    if (!fs::exists(entry.path() / "state.json")) continue;
    try {
      best = std::max(best, std::stoi(name.substr(5)));
    } catch (const std::exception&) {
    }
  }
  return best;
}

TrainResult train_began(const std::vector<image::ImageRecord>& dataset, const BeganConfig& config,
                        const TrainOptions& options) {
  config.validate();
  if (dataset.size() < static_cast<std::size_t>(config.batch_size)) {
    fail(ErrorKind::kInvalidArgument, "BEGAN dataset has " + std::to_string(dataset.size()) +
                                          " images, fewer than the batch size " + std::to_string(config.batch_size));
  }
  std::vector<nn::Tensor> images;
  images.reserve(dataset.size());
  for (const auto& r : dataset) {
    if (r.pixels.width != config.image_side || r.pixels.height != config.image_side) {
      fail(ErrorKind::kInvalidArgument, "BEGAN dataset image " + r.id + " is not " +
                                            std::to_string(config.image_side) + " square");
    }
    images.emplace_back(nn::Shape{3, config.image_side, config.image_side}, image::to_planar(r.pixels));
  }

  Trainer trainer(config);
  int resumed_from = 0;
  if (options.checkpoint_dir) {
    fs::create_directories(*options.checkpoint_dir);
    const int latest = latest_checkpoint(*options.checkpoint_dir);
    if (latest > 0) {
      trainer.restore(checkpoint_path(*options.checkpoint_dir, latest));
      resumed_from = trainer.iteration;
    }
  }

  auto& gen = trainer.model.generator();
  auto& disc = trainer.model.discriminator();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const double pixels = static_cast<double>(3) * config.image_side * config.image_side;
  std::vector<std::size_t> pool(images.size());

  bool stopped = false;
  while (trainer.iteration < config.iterations) {
    const int t = trainer.iteration + 1;
    Rng rng = Rng::derive(config.seed, 0xbe9a, static_cast<std::uint64_t>(t));
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < batch; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);

    nn::Gradients d_grads = disc.zero_gradients();
    nn::Gradients g_grads = gen.zero_gradients();
    const double unit = 1.0 / (pixels * static_cast<double>(batch));

    double loss_real = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& x = images[pool[b]];
      const auto trace = disc.forward_trace(x);
      const auto& recon = trace.back();
      loss_real += reconstruction_loss(x, recon);
      nn::Tensor d_recon(recon.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - recon[i];
        d_recon[i] = diff > 0 ? -unit : (diff < 0 ? unit : 0.0);
      }
      disc.backward(trace, d_recon, &d_grads, 1.0);
    }
    loss_real /= static_cast<double>(batch);

    double loss_fake = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const LatentVector z = [&] {
        LatentVector v;
        v.values.resize(kLatentDim);
        for (auto& c : v.values) c = rng.uniform(-1.0, 1.0);
        return v;
      }();
      const auto g_trace = gen.forward_trace(nn::Tensor({kLatentDim, 1, 1}, z.values));
      const auto& fake = g_trace.back();
      const auto d_trace = disc.forward_trace(fake);
      const auto& recon = d_trace.back();
      loss_fake += reconstruction_loss(fake, recon);
      nn::Tensor d_recon(recon.shape());
      nn::Tensor d_fake(fake.shape());
      for (std::size_t i = 0; i < fake.size(); ++i) {
        const double diff = fake[i] - recon[i];
        const double s = diff > 0 ? unit : (diff < 0 ? -unit : 0.0);
        d_recon[i] = -s;
        d_fake[i] = s;
      }
      // Discriminator sees -k * L(G(z)); the generator minimizes L(G(z)).
      d_fake += disc.backward(d_trace, d_recon, &d_grads, -trainer.k);
      gen.backward(g_trace, d_fake, &g_grads, 1.0);
    }
    loss_fake /= static_cast<double>(batch);

    if (!std::isfinite(loss_real) || !std::isfinite(loss_fake)) {
      nlohmann::json details = {{"iteration", t}};
      if (options.checkpoint_dir) {
        const int last = latest_checkpoint(*options.checkpoint_dir);
        if (last > 0) details["last_checkpoint"] = checkpoint_path(*options.checkpoint_dir, last).string();
      }
      fail(ErrorKind::kNumerical, "BEGAN loss became non-finite at iteration " + std::to_string(t), details);
    }

    trainer.d_opt.step(disc.parameters(), d_grads);
    trainer.g_opt.step(gen.parameters(), g_grads);

    trainer.k = update_k(trainer.k, config.lambda_k, config.gamma, loss_real, loss_fake);
    trainer.iteration = t;
    StepRecord record{t, loss_real, loss_fake, trainer.k, convergence_measure(config.gamma, loss_real, loss_fake)};
    trainer.history.push_back(record);
    if (options.on_step) options.on_step(record);

    if (options.checkpoint_dir && (t % config.checkpoint_interval == 0 || t == config.iterations)) {
      trainer.save(*options.checkpoint_dir);
      prune_checkpoints(*options.checkpoint_dir, std::max(1, options.keep_checkpoints));
    }
    if (options.should_stop && t < config.iterations && options.should_stop(t)) {
      stopped = true;
      break;
    }
  }

  TrainResult result{std::move(trainer.model), std::move(trainer.history), trainer.k, trainer.iteration,
                     resumed_from, !stopped};
  return result;
}

std::vector<Candidate> sample_candidates(const BeganModel& model, std::size_t count, std::uint64_t seed) {
  if (count < 1) fail(ErrorKind::kInvalidArgument, "candidate count must be >= 1");
  std::vector<Candidate> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Candidate c;
    c.z = LatentVector::sample(seed, i);
    c.record.pixels = model.generate(c.z);
    c.record.id = content_id(image::encode_png(c.record.pixels));
    c.record.source = {"began", "", "z:" + std::to_string(seed) + ":" + std::to_string(i)};
    c.record.label = image::ClassLabel::kUnlabeled;
    c.record.provenance = image::Provenance::kGenerated;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace canvas::began
