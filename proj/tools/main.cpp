#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <thread>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/log.hpp"
#include "concept_canvas/pipeline/pipeline.hpp"
#include "concept_canvas/service/server.hpp"
#include "concept_canvas/text/dtm.hpp"

namespace {

namespace fs = std::filesystem;
using canvas::Error;
using canvas::ErrorKind;
using canvas::fail;
using nlohmann::json;
using namespace canvas::pipeline;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Globals {
  std::string root = "runs";
  std::string run_id;
  bool json_out = false;
  bool toy = false;
  bool verbose = false;
  bool quiet = false;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string provider;
  std::string gates = "manual";
  std::vector<std::pair<std::string, std::string>> overrides;  // from --section.key value
};

// Pulls "--a.b value" and "--a.b=value" out of argv before CLI11 sees it.
std::vector<std::string> extract_overrides(int argc, char** argv, Globals& g) {
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      rest.push_back(arg);
      continue;
    }
    std::string name = arg.substr(2);
    std::optional<std::string> value;
    if (const auto eq = name.find('='); eq != std::string::npos) {
      value = name.substr(eq + 1);
      name = name.substr(0, eq);
    }
    if (name.find('.') == std::string::npos) {
      rest.push_back(arg);
      continue;
    }
    if (!value) {
      if (i + 1 >= argc) fail(ErrorKind::kInvalidArgument, "--" + name + " needs a value");
      value = argv[++i];
    }
    g.overrides.emplace_back(name, *value);
  }
  return rest;
}

bool has_config_flags(const Globals& g) {
  return g.toy || !g.config_file.empty() || g.seed || !g.provider.empty() || !g.overrides.empty();
}

Config effective_config(const Globals& g) {
  Config c = Config::defaults();
  if (g.toy) c.apply_toy();
  if (!g.config_file.empty()) c.merge_file(g.config_file);
  c.merge_environment();
  if (g.seed) c.set("run.seed", *g.seed);
  if (!g.provider.empty()) c.set("provider.spec", g.provider);
  for (const auto& [key, value] : g.overrides) c.set_text(key, value);
  c.validate();
  return c;
}

void reject_config_flags(const Globals& g) {
  if (has_config_flags(g)) {
    fail(ErrorKind::kInvalidArgument,
         "configuration flags apply only when a run is created; run " + g.run_id + " keeps its recorded config");
  }
}

void require_run(const Globals& g) {
  if (g.run_id.empty()) fail(ErrorKind::kInvalidArgument, "--run is required");
}

std::size_t position(const RunState& run, Stage stage) {
  const auto plan = run.planned();
  const auto it = std::find(plan.begin(), plan.end(), stage);
  if (it == plan.end()) {
    fail(ErrorKind::kConflict,
         std::string(to_string(stage)) + " is not part of a " + std::string(to_string(run.mode)) + " run");
  }
  return static_cast<std::size_t>(it - plan.begin());
}

AdvanceOptions base_options(const Globals& g) {
  AdvanceOptions o;
  o.auto_gates = g.gates == "auto";
  o.actor = "cli";
  o.should_stop = [] { return g_stop.load(); };
  o.on_progress = [](Stage stage, const json& info) {
    canvas::log::info(std::string(to_string(stage)) + ": " + info.dump());
  };
  return o;
}

json summary(const RunState& run) {
  json artifacts = json::object();
  for (const auto& [stage, list] : run.artifacts) artifacts[stage] = list.size();
  json out = {{"run_id", run.run_id},
              {"theme", run.theme},
              {"mode", to_string(run.mode)},
              {"stage", to_string(run.stage)},
              {"artifacts", artifacts},
              {"gate_decisions", run.gate_decisions.size()}};
  if (run.failure) out["failure"] = {{"stage", to_string(run.failure->stage)}, {"kind", run.failure->kind},
                                     {"message", run.failure->message}};
  return out;
}

int report(const Globals& g, const AdvanceResult& r) {
  json out = summary(r.run);
  json executed = json::array();
  for (Stage s : r.executed) executed.push_back(to_string(s));
  out["executed"] = executed;
  out["status"] = to_string(r.status);
  if (!r.message.empty()) out["message"] = r.message;
  if (g.json_out) {
    std::cout << out.dump() << "\n";
  } else {
    std::cout << r.run.run_id << ": " << to_string(r.status) << " at " << to_string(r.run.stage);
    if (!r.message.empty()) std::cout << " (" << r.message << ")";
    std::cout << "\n";
    if (r.run.stage == Stage::kDone) {
      std::cout << (fs::path(g.root) / r.run.run_id / "final" / "final.png").string() << "\n";
    }
  }
  if (r.status == AdvanceStatus::kFailed) {
    const auto kind = r.run.failure ? r.run.failure->kind : "internal";
    return (kind == "numerical_error" || kind == "internal") ? 2 : 1;
  }
  if (r.status == AdvanceStatus::kInterrupted) return 1;
  return 0;
}

// Executes exactly `target` on an existing run. Gates in between are
// resolved by default only with --gates auto.
int run_single_stage(const Globals& g, Pipeline& p, Stage target) {
  require_run(g);
  reject_config_flags(g);
  RunState run = p.resume(g.run_id);
  if (run.stage == Stage::kFailed) {
    fail(ErrorKind::kConflict, "run " + run.run_id + " FAILED at " + std::string(to_string(run.failure->stage)) +
                                   "; use `resume --retry`");
  }
  const auto want = position(run, target);
  const auto at = position(run, run.stage);
  if (at > want) {
    fail(ErrorKind::kConflict, std::string(to_string(target)) + " already completed; run " + run.run_id + " is at " +
                                   std::string(to_string(run.stage)));
  }
  const auto plan = run.planned();
  for (auto i = at; i < want; ++i) {
    if (!is_gate(plan[i])) {
      fail(ErrorKind::kInvalidArgument, "run " + run.run_id + " is at " + std::string(to_string(run.stage)) +
                                            "; complete it before " + std::string(to_string(target)),
           {{"stage", to_string(run.stage)}});
    }
    if (g.gates != "auto") {
      fail(ErrorKind::kInvalidArgument, "run " + run.run_id + " awaits a decision at " +
                                            std::string(to_string(plan[i])) + "; use `select` or --gates auto",
           {{"stage", to_string(plan[i])}});
    }
  }
  auto options = base_options(g);
  options.max_stages = 0;
  options.until = target;
  if (at < want) {
    const auto r = p.advance(g.run_id, options);
    if (r.status != AdvanceStatus::kAdvanced) return report(g, r);
  }
  options.until.reset();
  options.max_stages = 1;
  return report(g, p.advance(g.run_id, options));
}

std::string create(const Globals& g, Pipeline& p, const std::string& theme, const std::string& corpus,
                   const std::string& mode) {
  CreateRequest req;
  req.theme = theme;
  req.corpus_path = corpus;
  req.mode = parse_mode(mode);
  req.config = effective_config(g);
  req.run_id = g.run_id;
  const auto run = p.create_run(req);
  canvas::log::info("created run " + run.run_id + " under " + g.root);
  return run.run_id;
}

void print_terms(const Globals& g, const canvas::text::DiscriminativeTermSet& terms) {
  if (g.json_out) {
    std::cout << json(terms).dump() << "\n";
    return;
  }
  for (const auto& [term, weight] : terms.positives) std::cout << "+ " << term << "\t" << weight << "\n";
  for (const auto& [term, weight] : terms.negatives) std::cout << "- " << term << "\t" << weight << "\n";
}

int show_config(const Globals& g, const Config& c) {
  if (g.json_out) {
    std::cout << c.nested().dump(2) << "\n";
    return 0;
  }
  const json flat = c.flat();
  for (const auto& [key, value] : flat.items()) std::cout << key << " = " << value.dump() << "\n";
  return 0;
}

json parse_selection(Stage gate, bool approve, const std::vector<std::string>& ids,
                     const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
                     const std::string& query) {
  if (gate == Stage::kTermReview) {
    if (approve) return {{"approve", true}};
    return {{"positives", positives}, {"negatives", negatives}};
  }
  json s = {{"ids", ids}};
  if (!query.empty()) s["query"] = query;
  return s;
}

int serve(const Globals& g, const std::string& listen, const std::string& web_dir) {
  canvas::service::ServerOptions o;
  o.root = g.root;
  std::tie(o.host, o.port) = canvas::service::parse_listen(listen);
  if (const char* token = std::getenv(canvas::service::kTokenEnv)) o.token = token;
  o.base_config = effective_config(g);
  o.open_reads = o.base_config.as<bool>("service.open_reads");
  o.web_dir = web_dir;
  canvas::service::Server server(o);
  const int port = server.bind();
  std::cout << "listening on http://" << o.host << ":" << port << std::endl;
  if (o.token.empty()) canvas::log::warn(std::string(canvas::service::kTokenEnv) + " is unset; mutating calls are open");
  std::thread watcher([&] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  server.serve();
  g_stop = true;
  watcher.join();
  server.join_workers();
  return 0;
}

int run_cli(int argc, char** argv) {
  Globals g;
  auto args = extract_overrides(argc, argv, g);

  CLI::App app{"concept-canvas: theme-driven concept art pipeline"};
  app.set_version_flag("--version", "0.1.0");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--root", g.root, "Runs directory")->envname("CONCEPT_CANVAS_ROOT");
  app.add_option("--run", g.run_id, "Run id");
  app.add_flag("--json", g.json_out, "Machine-readable output on stdout");
  app.add_flag("--toy", g.toy, "Reduced models and schedules");
  app.add_option("--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Sets run.seed");
  app.add_option("--provider", g.provider, "Sets provider.spec (local:DIR or http:URL)");
  app.add_option("--gates", g.gates, "Gate handling")->check(CLI::IsMember({"manual", "auto"}));
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");
  app.footer("Any config key can be set with --section.key VALUE (e.g. --began.gamma 0.5).");

  std::string theme, corpus, mode = "generative";
  auto add_create_opts = [&](CLI::App* cmd, bool required) {
    auto* t = cmd->add_option("--theme", theme, "Theme label");
    auto* c = cmd->add_option("--corpus", corpus, "Corpus JSONL");
    if (required) {
      t->required();
      c->required();
    }
    cmd->add_option("--mode", mode, "generative or direct");
  };

  auto* ingest = app.add_subcommand("ingest", "Create a run (or reuse --run) and build tf/idf features");
  add_create_opts(ingest, false);
  auto* train_dtm = app.add_subcommand("train-dtm", "Train the text model and extract terms");
  std::optional<std::size_t> k_pos, k_neg;
  auto* terms = app.add_subcommand("terms", "Print the discriminative terms with weights");
  terms->add_option("--k-pos", k_pos, "Positive terms");
  terms->add_option("--k-neg", k_neg, "Negative terms");
  bool concept_harvest = false;
  auto* harvest = app.add_subcommand("harvest", "Harvest term images, or concept images with --concept");
  harvest->add_flag("--concept", concept_harvest, "Concept dataset for the generator");
  auto* train_dam = app.add_subcommand("train-dam", "Fine-tune the appearance model");
  auto* rank = app.add_subcommand("rank", "Score and rank candidate images");
  auto* train_gan = app.add_subcommand("train-gan", "Train the generator");
  auto* generate = app.add_subcommand("generate", "Sample generator candidates");
  auto* style_ref = app.add_subcommand("style-ref", "Build the tiled style reference");
  std::string content;
  std::optional<int> size;
  auto* stylize = app.add_subcommand("stylize", "Run the stylize stage, or stylize one image with --content");
  stylize->add_option("--content", content, "Image id to stylize ad hoc");
  stylize->add_option("--size", size, "Output side in pixels");

  int max_steps = 0;
  auto* run = app.add_subcommand("run", "Create a run and advance it until blocked or done");
  add_create_opts(run, true);
  run->add_option("--max-steps", max_steps, "Stop after N stages (0 = no limit)");
  bool retry = false;
  auto* resume = app.add_subcommand("resume", "Continue an existing run");
  resume->add_option("--max-steps", max_steps, "Stop after N stages (0 = no limit)");
  resume->add_flag("--retry", retry, "Return a FAILED run to its failed stage first");

  std::string listen = "127.0.0.1:8700", web_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP API");
  serve_cmd->add_option("--listen", listen, "host:port");
  serve_cmd->add_option("--web", web_dir, "Static UI bundle directory");

  auto* config = app.add_subcommand("config", "Configuration commands");
  config->require_subcommand(1);
  auto* config_show = config->add_subcommand("show", "Print the effective config (or a run's config with --run)");
  auto* status = app.add_subcommand("status", "Summarize a run and its pending gate");

  std::string gate_name, query;
  bool approve = false;
  std::vector<std::string> ids, positives, negatives;
  auto* select = app.add_subcommand("select", "Resolve the pending gate");
  select->add_option("--gate", gate_name, "Gate (defaults to the pending one)");
  select->add_option("--ids", ids, "Selected ids")->delimiter(',');
  select->add_flag("--approve", approve, "Approve the proposed terms");
  select->add_option("--positives", positives, "Edited positive terms")->delimiter(',');
  select->add_option("--negatives", negatives, "Edited negative terms")->delimiter(',');
  select->add_option("--query", query, "Concept query for CONCEPT_SELECTION");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  canvas::log::set_level(g.verbose ? canvas::log::Level::kDebug
                                   : g.quiet ? canvas::log::Level::kWarn : canvas::log::Level::kInfo);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (*config_show) {
    if (!g.run_id.empty()) {
      reject_config_flags(g);
      return show_config(g, Pipeline(g.root).resume(g.run_id).config);
    }
    return show_config(g, effective_config(g));
  }
  if (*serve_cmd) return serve(g, listen, web_dir);

  Pipeline p(g.root);
  if (*ingest) {
    if (g.run_id.empty() || !fs::exists(p.run_dir(g.run_id))) {
      if (theme.empty() || corpus.empty()) fail(ErrorKind::kInvalidArgument, "ingest needs --theme and --corpus");
      g.run_id = create(g, p, theme, corpus, mode);
      Globals stage_globals = g;
      stage_globals.toy = false;
      stage_globals.config_file.clear();
      stage_globals.seed.reset();
      stage_globals.provider.clear();
      stage_globals.overrides.clear();
      return run_single_stage(stage_globals, p, Stage::kCorpus);
    }
    return run_single_stage(g, p, Stage::kCorpus);
  }
  if (*train_dtm) return run_single_stage(g, p, Stage::kDtm);
  if (*harvest) {
    require_run(g);
    Stage target = concept_harvest ? Stage::kConceptHarvest : Stage::kHarvest;
    const auto state = p.resume(g.run_id);
    if (!concept_harvest && state.mode == Mode::kGenerative && state.stage != Stage::kFailed &&
        position(state, state.stage) > position(state, Stage::kHarvest)) {
      target = Stage::kConceptHarvest;
    }
    return run_single_stage(g, p, target);
  }
  if (*train_dam) return run_single_stage(g, p, Stage::kDamTrain);
  if (*rank) return run_single_stage(g, p, Stage::kRanking);
  if (*train_gan) return run_single_stage(g, p, Stage::kGanTrain);
  if (*generate) return run_single_stage(g, p, Stage::kGeneration);
  if (*style_ref) return run_single_stage(g, p, Stage::kStyleBuild);
  if (*stylize) {
    if (content.empty()) {
      if (size) fail(ErrorKind::kInvalidArgument, "--size needs --content");
      return run_single_stage(g, p, Stage::kStylize);
    }
    require_run(g);
    reject_config_flags(g);
    const auto out = p.stylize_adhoc(g.run_id, content, size);
    if (g.json_out) {
      std::cout << json{{"run_id", g.run_id}, {"content", content}, {"path", out.string()}}.dump() << "\n";
    } else {
      std::cout << out.string() << "\n";
    }
    return 0;
  }
  if (*terms) {
    require_run(g);
    const auto state = p.resume(g.run_id);
    const fs::path dir = p.run_dir(g.run_id);
    if (!fs::exists(dir / stage_directory(Stage::kDtm) / "model.json")) {
      fail(ErrorKind::kInvalidArgument, "run " + g.run_id + " has no text model yet; run `train-dtm` first");
    }
    const canvas::text::Vocabulary vocab(
        canvas::read_json(dir / stage_directory(Stage::kCorpus) / "vocabulary.json").get<std::vector<std::string>>());
    const auto model = canvas::text::load_dtm(canvas::read_json(dir / stage_directory(Stage::kDtm) / "model.json"), vocab);
    print_terms(g, canvas::text::extract_discriminative_terms(
                       model, vocab, k_pos.value_or(state.config.as<std::size_t>("dtm.k_pos")),
                       k_neg.value_or(state.config.as<std::size_t>("dtm.k_neg"))));
    return 0;
  }
  if (*run) {
    g.run_id = create(g, p, theme, corpus, mode);
    auto options = base_options(g);
    options.max_stages = max_steps;
    return report(g, p.advance(g.run_id, options));
  }
  if (*resume) {
    require_run(g);
    reject_config_flags(g);
    if (retry) p.retry(g.run_id);
    auto options = base_options(g);
    options.max_stages = max_steps;
    return report(g, p.advance(g.run_id, options));
  }
  if (*status) {
    require_run(g);
    const auto state = p.resume(g.run_id);
    json out = summary(state);
    if (is_gate(state.stage)) out["gate"] = to_json(p.gate_view(g.run_id, state, state.stage), 1, 10);
    if (g.json_out) {
      std::cout << out.dump() << "\n";
    } else {
      std::cout << state.run_id << " [" << to_string(state.mode) << "] " << state.theme << ": "
                << to_string(state.stage) << "\n";
      if (state.failure) std::cout << "failed: " << state.failure->message << "\n";
      if (out.contains("gate")) {
        std::cout << "pending gate " << to_string(state.stage) << " (" << out["gate"]["total"] << " items)\n";
      }
    }
    return 0;
  }
  if (*select) {
    require_run(g);
    const auto state = p.resume(g.run_id);
    const Stage gate = gate_name.empty() ? state.stage : parse_stage(gate_name);
    const auto after = p.resolve_gate(g.run_id, gate, parse_selection(gate, approve, ids, positives, negatives, query), "cli");
    if (g.json_out) {
      std::cout << summary(after).dump() << "\n";
    } else {
      std::cout << after.run_id << ": " << to_string(gate) << " resolved; now at " << to_string(after.stage) << "\n";
    }
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return canvas::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
