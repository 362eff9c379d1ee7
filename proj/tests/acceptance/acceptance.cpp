// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
#include <Eigen/Eigenvalues>
#include <httplib.h>
#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "concept_canvas/acquisition/harvest.hpp"
#include "concept_canvas/began/began.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/dam/dam.hpp"
#include "concept_canvas/dam/vgg.hpp"
#include "concept_canvas/pipeline/run.hpp"
#include "concept_canvas/service/server.hpp"
#include "concept_canvas/style/style.hpp"
#include "concept_canvas/text/corpus.hpp"
#include "concept_canvas/text/dtm.hpp"
#include "fixtures.hpp"

namespace {

namespace fs = std::filesystem;
using namespace canvas;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

// ---- text -----------------------------------------------------------------

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Outcome tfidf_oracle() {
  Outcome o;
  std::vector<std::string> pool;
  for (int i = 0; i < 50; ++i) pool.push_back("term" + std::string(1, static_cast<char>('a' + i / 26)) +
                                              std::string(1, static_cast<char>('a' + i % 26)));
  double worst = 0.0;
  for (int c = 0; c < 5; ++c) {
    Rng rng(100 + c);
    text::Corpus corpus;
    const int docs = 4 + 1 + c;  // 5..9
    for (int d = 0; d < docs; ++d) {
      text::Document doc;
      doc.id = "doc" + std::to_string(d);
      doc.label = d % 2 ? text::Label::kOther : text::Label::kTheme;
      const auto len = 3 + rng.below(12);
      for (std::size_t i = 0; i < len; ++i) doc.text += pool[rng.below(10 + 10 * c)] + " ";
      corpus.documents.push_back(doc);
    }
    const auto vocab = text::build_vocabulary(corpus, {1, 1.0});
    const auto m = text::tfidf_vectorize(corpus, vocab);
    o.require(vocab.size() <= 50, "vocabulary over 50 terms");

    // Brute force from the definition.
    std::vector<std::vector<std::string>> tokens;
    std::set<std::string> terms;
    for (const auto& d : corpus.documents) {
      tokens.push_back(split_words(d.text));
      terms.insert(tokens.back().begin(), tokens.back().end());
    }
    o.require(std::vector<std::string>(terms.begin(), terms.end()) == vocab.terms(), "vocabulary differs");
    const double n = docs;
    for (int d = 0; d < docs; ++d) {
      std::map<std::string, double> row;
      double norm = 0.0;
      for (const auto& t : terms) {
        double df = 0;
        for (const auto& doc : tokens) df += std::count(doc.begin(), doc.end(), t) > 0;
        const double tf = static_cast<double>(std::count(tokens[d].begin(), tokens[d].end(), t));
        row[t] = tf * (std::log((1 + n) / (1 + df)) + 1);
        norm += row[t] * row[t];
      }
      for (const auto& t : terms) {
        worst = std::max(worst, std::abs(m.at(d, vocab.index_of(t)) - row[t] / std::sqrt(norm)));
      }
    }
  }
  o.require(worst <= 1e-9, "max abs error " + fmt(worst));
  if (o.pass) o.detail = "5 corpora, max abs error " + fmt(worst);
  return o;
}

struct Planted {
  fixtures::PlantedCorpus planted = fixtures::planted_corpus(20, 3);
  text::TokenizedCorpus tokens = text::tokenize_corpus(planted.corpus, text::StopwordList::english());
  text::Vocabulary vocab = text::build_vocabulary(tokens, {});
  text::DocTermMatrix matrix = text::tfidf_vectorize(tokens, vocab);
  std::vector<int> labels = text::binary_labels(tokens);
};

Outcome dtm_separability() {
  Outcome o;
  const Planted p;
  const auto model = text::train_dtm(p.matrix, p.labels, {});
  const auto terms = text::extract_discriminative_terms(model, p.vocab, 15, 15);
  auto pos = terms.positive_terms();
  auto neg = terms.negative_terms();
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  o.require(model.train_accuracy == 1.0, "train accuracy " + fmt(model.train_accuracy));
  o.require(pos == p.planted.theme_terms, "positive terms differ from the planted set");
  o.require(neg == p.planted.other_terms, "negative terms differ from the planted set");
  if (o.pass) o.detail = "accuracy 1.0, 30/30 planted terms";
  return o;
}

Outcome dtm_gradient() {
  Outcome o;
  const Planted p;
  Rng rng(21);
  std::vector<double> w(p.vocab.size());
  for (auto& x : w) x = rng.uniform(-1, 1);
  const double b = -0.2, l2 = 0.01, h = 1e-6;
  const auto lg = text::logistic_loss(p.matrix, p.labels, w, b, l2);
  auto loss = [&](const std::vector<double>& ww, double bb) { return text::logistic_loss(p.matrix, p.labels, ww, bb, l2).loss; };
  double num = 0, den = 0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    auto wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (loss(wp, b) - loss(wm, b)) / (2 * h);
    num += (fd - lg.grad_weights[j]) * (fd - lg.grad_weights[j]);
    den += fd * fd;
  }
  const double fdb = (loss(w, b + h) - loss(w, b - h)) / (2 * h);
  num += (fdb - lg.grad_bias) * (fdb - lg.grad_bias);
  den += fdb * fdb;
  const double rel = std::sqrt(num / den);
  o.require(rel < 1e-5, "relative error " + fmt(rel));
  if (o.pass) o.detail = "relative error " + fmt(rel) + " over " + std::to_string(w.size() + 1) + " parameters";
  return o;
}

// ---- appearance model -----------------------------------------------------

Outcome dam_planted() {
  Outcome o;
  dam::DamConfig cfg;
  cfg.image_side = 32;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.holdout_fraction = 0.0;
  cfg.frozen_blocks = 3;
  cfg.seed = 4;
  const auto train = acquisition::normalize_images(fixtures::planted_images(40, 48, 31), cfg.image_side);
  const auto model = dam::train_dam(train, cfg, dam::VggBackbone(8, 2));
  const auto& report = model.report();
  o.require(report.train_accuracy >= 0.95, "train accuracy " + fmt(report.train_accuracy));
  o.require(static_cast<int>(report.epoch_losses.size()) <= 5, "more than 5 epochs");
  const auto holdout = acquisition::normalize_images(fixtures::planted_images(10, 48, 77), cfg.image_side);
  const auto ranked = dam::rank_images(model, holdout, holdout.size());
  std::size_t top_positive = 0;
  while (top_positive < ranked.size() && ranked[top_positive].record.label == image::ClassLabel::kPositive) ++top_positive;
  o.require(ranked.size() == 20 && top_positive == 10, "holdout ranking interleaves classes");
  if (o.pass) o.detail = "train accuracy " + fmt(report.train_accuracy) + ", holdout 10/10 positives on top";
  return o;
}

Outcome vgg_shapes() {
  Outcome o;
  const std::map<std::string, int> channels = {
      {"conv1_1", 64},  {"conv1_2", 64},  {"conv2_1", 128}, {"conv2_2", 128}, {"conv3_1", 256},
      {"conv3_2", 256}, {"conv3_3", 256}, {"conv4_1", 512}, {"conv4_2", 512}, {"conv4_3", 512},
      {"conv5_1", 512}, {"conv5_2", 512}, {"conv5_3", 512}};
  const std::map<char, int> downsample = {{'1', 1}, {'2', 2}, {'3', 4}, {'4', 8}, {'5', 16}};
  const dam::VggBackbone vgg(1, 0);
  int checked = 0;
  for (int side : {128, 224}) {
    for (const auto& [name, c] : channels) {
      const int s = side / downsample.at(name[4]);
      const auto shape = vgg.net().output_shape({3, side, side}, vgg.activation_layer(name) + 1);
      o.require(shape == nn::Shape{c, s, s}, name + " at " + std::to_string(side));
      ++checked;
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " layer shapes";
  return o;
}

// ---- generator ------------------------------------------------------------

Outcome began_control_law() {
  Outcome o;
  Rng rng(5);
  const double lambda = 1e-3, gamma = 0.5;
  for (int i = 0; i < 10000; ++i) {
    const double k = rng.uniform(), real = rng.uniform(0, 2), fake = rng.uniform(0, 2);
    const double next = began::update_k(k, lambda, gamma, real, fake);
    o.require(next >= 0.0 && next <= 1.0, "k left [0,1]");
    o.require(began::update_k(k, lambda, gamma, real, gamma * real) == k, "equilibrium is not a fixed point");
  }
  const double hand = began::update_k(0.5, 1e-3, 0.5, 0.2, 0.05);
  o.require(std::abs(hand - 0.50005) < 1e-12, "hand case gives " + fmt(hand));
  if (o.pass) o.detail = "10000 triples, hand case 0.50005";
  return o;
}

std::vector<image::ImageRecord> disc_dataset(std::size_t n, int side) {
  Rng rng(9);
  std::vector<image::ImageRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(fixtures::make_record(fixtures::disc_scene(side, rng), image::ClassLabel::kUnlabeled,
                                        image::Provenance::kHarvested));
  }
  return out;
}

Outcome began_config_audit() {
  Outcome o;
  const began::BeganConfig d;
  o.require(d.iterations == 17000 && d.batch_size == 16 && d.image_side == 128, "iterations/batch/side");
  o.require(d.learning_rate == 1e-4 && d.gamma == 0.5 && began::kLatentDim == 100, "lr/gamma/z-dim");
  began::BeganConfig c;
  c.iterations = 200;
  c.batch_size = 8;
  c.image_side = 32;
  c.filters = 8;
  c.embedding_dim = 16;
  c.checkpoint_interval = 200;
  c.seed = 1;
  const auto r = began::train_began(disc_dataset(32, 32), c);
  o.require(r.history.size() == 200, "history length");
  bool finite = true;
  for (const auto& s : r.history) finite &= std::isfinite(s.loss_real) && std::isfinite(s.loss_fake);
  o.require(finite, "non-finite loss");
  const double first = r.history.front().m_global, last = r.history.back().m_global;
  o.require(last < first, "M_global(200) " + fmt(last) + " >= M_global(1) " + fmt(first));
  if (o.pass) o.detail = "defaults match; M_global " + fmt(first) + " -> " + fmt(last);
  return o;
}

Outcome generator_determinism() {
  Outcome o;
  fixtures::TempDir dir("acc");
  began::BeganConfig c;
  c.iterations = 4;
  c.batch_size = 4;
  c.image_side = 32;
  c.filters = 4;
  c.embedding_dim = 8;
  c.checkpoint_interval = 4;
  const auto trained = began::train_began(disc_dataset(8, 32), c);
  const auto z = began::LatentVector::sample(3, 1);
  const auto a = trained.model.generate(z);
  o.require(a == trained.model.generate(z), "repeated calls differ");
  trained.model.save(dir / "model");
  o.require(began::BeganModel::load(dir / "model").generate(z) == a, "save/load round-trip differs");
  if (o.pass) o.detail = "bit-identical across calls and save/load";
  return o;
}

// ---- style transfer -------------------------------------------------------

std::vector<image::ImageRecord> exemplars(std::size_t n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<image::ImageRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(fixtures::make_record(fixtures::pattern_tile(side, rng), image::ClassLabel::kUnlabeled,
                                        image::Provenance::kArticle));
  }
  return out;
}

Outcome style_losses() {
  Outcome o;
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const int c = 1 + static_cast<int>(rng.below(8));
    nn::Tensor f({c, 1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5))});
    for (auto& v : f.values()) v = rng.uniform(-2, 2);
    const auto g = style::gram(f);
    Eigen::MatrixXd m(c, c);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        o.require(g.at(i, j) == g.at(j, i), "Gram not symmetric");
        m(i, j) = g.at(i, j);
      }
    }
    o.require(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff() >= -1e-12, "Gram not PSD");
  }

  dam::VggBackbone backbone(8, 17);
  backbone.set_pool_mode(nn::PoolMode::kAverage);
  style::StyleConfig cfg;
  cfg.output_side = 32;
  const auto tile = fixtures::pattern_tile(32, rng);
  const auto t = style::pixels_to_tensor(tile);
  style::StyleReference self;
  self.mosaic = tile;
  o.require(style::content_loss(t, t, cfg, backbone).loss == 0.0, "content loss nonzero at identity");
  o.require(std::abs(style::style_loss(t, self, cfg, backbone).loss) < 1e-20, "style loss nonzero at identity");

  const auto mosaic = style::build_style_reference(exemplars(4, 48, 8), 32).mosaic;
  const auto targets = style::style_targets(backbone, mosaic, 32, cfg);
  const auto content = style::content_features(style::pixels_to_tensor(fixtures::pattern_tile(32, rng)), cfg, backbone);
  nn::Tensor x = style::pixels_to_tensor(fixtures::white_noise(32, 32, rng));
  const auto analytic = style::combined_loss(x, content, targets, cfg, backbone);
  const double h = 1e-5;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); i += 61) {
    nn::Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (style::combined_loss(xp, content, targets, cfg, backbone).total -
                       style::combined_loss(xm, content, targets, cfg, backbone).total) /
                      (2 * h);
    num += (fd - analytic.grad[i]) * (fd - analytic.grad[i]);
    den += fd * fd;
  }
  const double rel = std::sqrt(num / den);
  o.require(rel < 1e-3, "combined gradient relative error " + fmt(rel));

  auto alpha0 = cfg;
  alpha0.output_side = 64;
  alpha0.content_weight = 0.0;
  alpha0.steps = 50;
  const auto scene = fixtures::make_record(fixtures::disc_scene(64, rng), image::ClassLabel::kUnlabeled,
                                           image::Provenance::kGenerated);
  const auto r = style::stylize(scene, style::build_style_reference(exemplars(4, 64, 12), 32), alpha0, backbone);
  const double reduction = r.losses[r.best_step].style / r.losses[0].style;
  o.require(r.losses[r.best_step].style < r.losses[0].style, "alpha=0 did not reduce style loss");

  const std::map<int, std::pair<int, int>> layouts = {{1, {1, 1}}, {4, {2, 2}}, {5, {2, 3}}, {9, {3, 3}}};
  for (const auto& [n, rc] : layouts) {
    const auto l = style::mosaic_layout(n, 64);
    o.require(l.rows == rc.first && l.cols == rc.second, "mosaic layout for n=" + std::to_string(n));
  }
  if (o.pass) {
    o.detail = "gradient rel error " + fmt(rel) + ", style loss x" + fmt(reduction) + " in 50 steps";
  }
  return o;
}

Outcome layer_audit() {
  Outcome o;
  const style::StyleConfig d;
  o.require(d.style_layers == std::vector<std::string>{"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"},
            "style layers");
  o.require(d.content_layer == "conv4_2", "content layer");
  o.require(d.output_side == 1024, "output side");
  fixtures::TempDir dir("acc");
  dam::VggBackbone backbone(8, 3);
  backbone.set_pool_mode(nn::PoolMode::kAverage);
  auto cfg = d;
  cfg.steps = 1;
  Rng rng(2);
  const auto content = fixtures::make_record(fixtures::disc_scene(96, rng), image::ClassLabel::kUnlabeled,
                                             image::Provenance::kGenerated);
  const auto r = style::stylize(content, style::build_style_reference(exemplars(4, 64, 1), 64), cfg, backbone);
  image::write_png(dir / "out.png", r.output.pixels);
  const auto back = image::read_image(dir / "out.png");
  o.require(back.width == 1024 && back.height == 1024, "PNG is " + std::to_string(back.width) + "x" +
                                                            std::to_string(back.height));
  if (o.pass) o.detail = "conv1_1..conv5_1 / conv4_2, 1024x1024 PNG";
  return o;
}

// ---- pipeline through the CLI ---------------------------------------------

struct CliRun {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

CliRun cli(const fs::path& scratch, const std::vector<std::string>& args) {
  std::string cmd = quote(CANVAS_CLI_PATH) + " -q";
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote((scratch / "cli.out").string()) + " 2>>" + quote((scratch / "cli.err").string());
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(scratch / "cli.out")};
}

std::vector<std::string> create_args(const fixtures::OfflineFixture& fx, const fs::path& root, const std::string& id) {
  return {"--root",   root.string(), "--toy",    "--seed",  "8",       "--provider", "local:" + fx.provider_root.string(),
          "--style.exemplars", fx.style_dir.string(), "--theme", fx.theme, "--corpus", fx.corpus.string(), "--run", id,
          "--gates",  "auto"};
}

bool same_final(const fs::path& a, const fs::path& b) {
  for (const char* f : {"final/final.png", "final/provenance.json"}) {
    if (!fs::exists(a / f) || !fs::exists(b / f) || read_text(a / f) != read_text(b / f)) return false;
  }
  return true;
}

Outcome pipeline_end_to_end() {
  Outcome o;
  fixtures::TempDir tmp("acc");
  const auto fx = fixtures::write_offline_fixture(tmp / "fixture");
  const fs::path root = tmp / "runs";

  auto args = create_args(fx, root, "ref");
  args.insert(args.begin(), "run");
  const auto ref = cli(tmp.path(), args);
  o.require(ref.code == 0, "reference run exited " + std::to_string(ref.code));
  if (!o.pass) return o;
  const auto state = pipeline::load_run(root / "ref");
  o.require(state.stage == pipeline::Stage::kDone, "reference run not DONE");
  o.require(pipeline::validate_artifacts(root / "ref", state).empty(), "manifest validation failed");
  for (auto s : state.planned()) {
    if (s == pipeline::Stage::kDone || pipeline::is_gate(s)) continue;
    o.require(state.artifacts.contains(std::string(pipeline::to_string(s))) &&
                  !state.artifacts.at(std::string(pipeline::to_string(s))).empty(),
              std::string("no artifacts for ") + std::string(pipeline::to_string(s)));
  }

  // Stop after every stage boundary, then resume in a fresh process.
  const std::size_t boundaries = state.planned().size() - 1;
  for (std::size_t k = 1; k < boundaries && o.pass; ++k) {
    const std::string id = "b" + std::to_string(k);
    auto a = create_args(fx, root, id);
    a.insert(a.begin(), "run");
    a.insert(a.end(), {"--max-steps", std::to_string(k)});
    o.require(cli(tmp.path(), a).code == 0, "stop after " + std::to_string(k) + " stages failed");
    o.require(cli(tmp.path(), {"resume", "--root", root.string(), "--run", id, "--gates", "auto"}).code == 0,
              "resume after boundary " + std::to_string(k) + " failed");
    o.require(same_final(root / "ref", root / id), "final artifacts differ after boundary " + std::to_string(k));
    fs::remove_all(root / id);
  }

  // SIGKILL in the middle of generator training, then resume.
  if (o.pass) {
    auto a = create_args(fx, root, "killed");
    a.insert(a.begin(), "run");
    const pid_t pid = fork();
    if (pid == 0) {
      std::vector<char*> argv;
      std::string exe = CANVAS_CLI_PATH, quiet = "-q";
      argv.push_back(exe.data());
      argv.push_back(quiet.data());
      for (auto& s : a) argv.push_back(s.data());
      argv.push_back(nullptr);
      const int null_fd = open("/dev/null", O_WRONLY);
      dup2(null_fd, STDOUT_FILENO);
      dup2(null_fd, STDERR_FILENO);
      execv(argv[0], argv.data());
      _exit(127);
    }
    const auto deadline = Clock::now() + std::chrono::minutes(5);
    bool in_gan = false;
    while (!in_gan && Clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      try {
        for (const auto& e : pipeline::EventLog(root / "killed").read()) {
          in_gan |= e.stage == "GAN_TRAIN" && e.kind == "progress";
        }
      } catch (const std::exception&) {
      }
    }
    kill(pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    o.require(in_gan, "never observed GAN training progress");
    o.require(cli(tmp.path(), {"resume", "--root", root.string(), "--run", "killed", "--gates", "auto"}).code == 0,
              "resume after SIGKILL failed");
    o.require(same_final(root / "ref", root / "killed"), "final artifacts differ after SIGKILL");
  }
  if (o.pass) o.detail = "DONE; " + std::to_string(boundaries - 1) + " boundary resumes + SIGKILL resume identical";
  return o;
}

// ---- HTTP API -------------------------------------------------------------

Outcome api_contract() {
  Outcome o;
  fixtures::TempDir tmp("acc");
  const auto fx = fixtures::write_offline_fixture(tmp / "fixture");
  service::ServerOptions opts;
  opts.root = tmp / "runs";
  opts.port = 0;
  opts.token = "t0ken";
  opts.base_config.apply_toy();
  opts.base_config.set("provider.spec", "local:" + fx.provider_root.string());
  opts.base_config.set("style.exemplars", fx.style_dir.string());
  service::Server server(opts);
  const int port = server.bind();
  std::thread loop([&] { server.serve(); });

  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(60, 0);
  c.set_bearer_token_auth("t0ken");
  auto post = [&](const std::string& path, const json& body) { return c.Post(path, body.dump(), "application/json"); };
  auto get_json = [&](const std::string& path) { return json::parse(c.Get(path)->body); };

  auto created = post("/runs", {{"theme", fx.theme}, {"corpus", fx.corpus.string()}, {"run_id", "api"}});
  o.require(created && created->status == 201, "create did not return 201");
  httplib::Client anon("127.0.0.1", port);
  o.require(anon.Post("/runs/api/advance", "{}", "application/json")->status == 401, "missing token accepted");

  std::int64_t cursor = 0;
  bool monotone = true;
  auto drain_events = [&] {
    const auto ev = get_json("/runs/api/events?after_seq=" + std::to_string(cursor));
    for (const auto& e : ev.at("events")) {
      monotone &= e.at("seq").get<std::int64_t>() == cursor + 1;
      cursor = e.at("seq").get<std::int64_t>();
    }
  };
  auto advance_until_gate = [&] {
    for (int i = 0; i < 20; ++i) {
      const auto r = post("/runs/api/advance", {{"stages", 0}});
      if (!r || r->status != 202) return r ? r->status : -1;
      for (int w = 0; w < 600; ++w) {
        const auto ev = get_json("/runs/api/events?wait=5&after_seq=" + std::to_string(cursor));
        bool settled = false;
        for (const auto& e : ev.at("events")) {
          monotone &= e.at("seq").get<std::int64_t>() == cursor + 1;
          cursor = e.at("seq").get<std::int64_t>();
          const auto kind = e.at("kind").get<std::string>();
          settled |= kind == "gate_pending" || kind == "stage_failed" || kind == "run_done";
        }
        if (settled) break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      const auto stage = get_json("/runs/api").at("stage").get<std::string>();
      if (pipeline::is_gate(pipeline::parse_stage(stage)) || stage == "DONE" || stage == "FAILED") return 200;
    }
    return -1;
  };

  o.require(advance_until_gate() == 200, "advance to TERM_REVIEW");
  o.require(get_json("/runs/api/gates/current").at("total") == 30, "TERM_REVIEW does not list 30 terms");
  o.require(post("/runs/api/gates/TERM_REVIEW/selection", {{"approve", true}})->status == 200, "approve terms");
  o.require(post("/runs/api/gates/TERM_REVIEW/selection", {{"approve", true}})->status == 409,
            "double resolution not 409");
  o.require(advance_until_gate() == 200, "advance to CONCEPT_SELECTION");
  const auto gate = get_json("/runs/api/gates/current");
  o.require(gate.at("gate") == "CONCEPT_SELECTION", "expected CONCEPT_SELECTION");
  const auto items = gate.at("items");
  o.require(post("/runs/api/gates/CONCEPT_SELECTION/selection", {{"ids", {items[0].at("id"), items[1].at("id")}}})
                    ->status == 422,
            "arity violation not 422");
  o.require(c.Get("/runs/api/artifacts/final.png")->status == 404, "final.png served before FINAL_SELECTION");
  o.require(post("/runs/api/gates/CONCEPT_SELECTION/selection", {{"ids", {items[0].at("id")}}})->status == 200,
            "select concept");
  o.require(post("/runs/api/gates/CONCEPT_SELECTION/selection", {{"ids", {items[0].at("id")}}})->status == 409,
            "double concept resolution not 409");
  o.require(advance_until_gate() == 200, "advance to CANDIDATE_SELECTION");
  const auto cands = get_json("/runs/api/gates/current").at("items");
  o.require(post("/runs/api/gates/CANDIDATE_SELECTION/selection", {{"ids", {cands[0].at("id")}}})->status == 200,
            "select candidate");
  o.require(advance_until_gate() == 200, "advance to FINAL_SELECTION");
  const auto finals = get_json("/runs/api/gates/current").at("items");
  o.require(post("/runs/api/gates/FINAL_SELECTION/selection", {{"ids", {finals[0].at("id")}}})->status == 200,
            "select final");
  o.require(get_json("/runs/api").at("stage") == "DONE", "run not DONE");
  const auto final_png = c.Get("/runs/api/artifacts/final.png");
  o.require(final_png->status == 200 && final_png->get_header_value("Content-Type") == "image/png",
            "final.png not served after DONE");
  drain_events();
  const auto all = get_json("/runs/api/events").at("events");
  o.require(monotone && cursor == static_cast<std::int64_t>(all.size()), "event cursor not monotone/contiguous");

  server.stop();
  loop.join();
  server.join_workers();
  if (o.pass) o.detail = "lifecycle to DONE, 409/422/401 paths, " + std::to_string(cursor) + " contiguous events";
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0 = none stated
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  const std::vector<Criterion> criteria = {
      {"tfidf-oracle-equivalence", 1, tfidf_oracle},
      {"dtm-separability", 10, dtm_separability},
      {"dtm-gradient-check", 0, dtm_gradient},
      {"dam-planted-classes", 120, dam_planted},
      {"vgg-shape-contract", 0, vgg_shapes},
      {"began-control-law", 0, began_control_law},
      {"began-config-audit", 180, began_config_audit},
      {"generator-determinism", 0, generator_determinism},
      {"style-losses", 120, style_losses},
      {"style-layer-audit", 0, layer_audit},
      {"pipeline-end-to-end-offline", 600, pipeline_end_to_end},
      {"api-contract-suite", 0, api_contract},
  };
  int failures = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += " (over budget " + fmt(c.budget_seconds) + "s)";
    }
    failures += !o.pass;
    ++ran;
    std::printf("%s  %-30s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures;
}
