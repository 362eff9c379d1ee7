#include "concept_canvas/pipeline/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <random>
#include <set>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/common/log.hpp"
#include "concept_canvas/text/corpus.hpp"
#include "stages.hpp"

namespace canvas::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kAdhocDir = "styled/adhoc";

std::string random_suffix() {
  std::random_device rd;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < 6; ++i) s += kHex[rd() % 16];
  return s;
}

std::string compact_time() {
  std::string t = utc_timestamp();  // 2026-01-02T03:04:05Z
  t.erase(std::remove_if(t.begin(), t.end(), [](char c) { return c == '-' || c == ':'; }), t.end());
  if (!t.empty() && t.back() == 'Z') t.pop_back();
  return t;
}

// Copies every image in `from` into `to` as <content-id><ext>.
std::size_t copy_images(const fs::path& from, const fs::path& to) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(from)) {
    if (e.is_regular_file() && detail::is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto bytes = read_bytes(f);
    auto ext = f.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    write_bytes_atomic(to / (content_id(bytes) + ext), bytes);
  }
  return files.size();
}

void require_directory(const std::string& key, const std::string& value) {
  if (!value.empty() && !fs::is_directory(value)) {
    fail(ErrorKind::kNotFound, key + " directory not found: " + value, {{"field", key}});
  }
}

// Clears a stage's output before it runs so a re-run never mixes results.
void clean_stage_output(const fs::path& dir, Stage stage) {
  const fs::path out = dir / stage_directory(stage);
  if (stage == Stage::kStylize && fs::exists(out)) {
    for (const auto& e : fs::directory_iterator(out)) {
      if (e.path().filename() != "adhoc") fs::remove_all(e.path());
    }
    return;
  }
  fs::remove_all(out);
}

std::vector<Artifact> stage_artifacts(const fs::path& dir, Stage stage) {
  auto list = collect_artifacts(dir, stage_directory(stage));
  if (stage == Stage::kStylize) {
    const std::string adhoc = std::string(kAdhocDir) + "/";
    std::erase_if(list, [&](const Artifact& a) { return a.path.rfind(adhoc, 0) == 0; });
  }
  return list;
}

std::vector<std::string> string_ids(const json& selection) {
  if (!selection.is_object() || !selection.contains("ids") || !selection.at("ids").is_array()) {
    fail(ErrorKind::kUnprocessable, "selection must be an object with an 'ids' array", {{"field", "ids"}});
  }
  std::vector<std::string> ids;
  for (const auto& v : selection.at("ids")) {
    if (!v.is_string()) fail(ErrorKind::kUnprocessable, "selection ids must be strings", {{"field", "ids"}});
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

std::vector<std::string> term_list(const json& selection, const char* field) {
  if (!selection.contains(field) || !selection.at(field).is_array() || selection.at(field).empty()) {
    fail(ErrorKind::kUnprocessable, std::string("edited term set needs a non-empty '") + field + "' list",
         {{"field", field}});
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : selection.at(field)) {
    if (!v.is_string() || v.get<std::string>().empty()) {
      fail(ErrorKind::kUnprocessable, std::string("'") + field + "' must contain non-empty strings",
           {{"field", field}});
    }
    if (seen.insert(v.get<std::string>()).second) out.push_back(v.get<std::string>());
  }
  return out;
}

bool gate_is_automatic(const RunState& run, Stage gate, const AdvanceOptions& options) {
  if (options.auto_gates) return true;
  return gate == Stage::kTermReview && run.config.as<std::string>("gates.term_review") == "auto";
}

}  // namespace

std::string_view to_string(AdvanceStatus status) {
  switch (status) {
    case AdvanceStatus::kAdvanced: return "advanced";
    case AdvanceStatus::kBlocked: return "blocked";
    case AdvanceStatus::kDone: return "done";
    case AdvanceStatus::kFailed: return "failed";
    case AdvanceStatus::kInterrupted: return "interrupted";
  }
  return "unknown";
}

fs::path stage_directory(Stage stage) {
  switch (stage) {
    case Stage::kCorpus: return "corpus/features";
    case Stage::kDtm: return "dtm";
    case Stage::kHarvest: return "harvest/terms";
    case Stage::kDamTrain: return "dam";
    case Stage::kRanking: return "rank";
    case Stage::kConceptHarvest: return "harvest/concept";
    case Stage::kGanTrain: return "gan/model";
    case Stage::kGeneration: return "gan/samples";
    case Stage::kStyleBuild: return "style";
    case Stage::kStylize: return "styled";
    case Stage::kFinalSelection: return "final";
    default: return {};
  }
}

json to_json(const GateView& view, std::size_t page, std::size_t size) {
  if (page < 1) fail(ErrorKind::kInvalidArgument, "page must be >= 1", {{"field", "page"}});
  const std::size_t total = view.items.size();
  const std::size_t per_page = size == 0 ? std::max<std::size_t>(total, 1) : size;
  const std::size_t begin = std::min(total, (page - 1) * per_page);
  const std::size_t end = std::min(total, begin + per_page);
  json items = json::array();
  for (std::size_t i = begin; i < end; ++i) {
    json item = view.items[i].info;
    item["id"] = view.items[i].id;
    items.push_back(std::move(item));
  }
  return {{"gate", to_string(view.gate)},
          {"min_select", view.min_select},
          {"max_select", view.max_select},
          {"total", total},
          {"page", page},
          {"size", per_page},
          {"pages", (total + per_page - 1) / per_page},
          {"items", items}};
}

Pipeline::Pipeline(fs::path root, ProviderFactory providers) : root_(std::move(root)), providers_(std::move(providers)) {
  if (!providers_) {
    providers_ = [](const Config& config) {
      const auto spec = config.as<std::string>("provider.spec");
      if (spec.empty()) {
        fail(ErrorKind::kInvalidArgument, "no image provider configured (set provider.spec or --provider)");
      }
      auto http = config.http_provider();
      if (const char* key = std::getenv(acquisition::kSearchKeyEnv)) http.api_key = key;
      return acquisition::make_provider(spec, http);
    };
  }
}

RunState Pipeline::create_run(const CreateRequest& request) {
  if (request.theme.empty()) fail(ErrorKind::kInvalidArgument, "theme is required", {{"field", "theme"}});
  request.config.validate();
  if (request.corpus_path.empty()) fail(ErrorKind::kInvalidArgument, "corpus is required", {{"field", "corpus"}});
  if (!fs::is_regular_file(request.corpus_path)) {
    fail(ErrorKind::kNotFound, "corpus file not found: " + request.corpus_path.string(), {{"field", "corpus"}});
  }
  const auto corpus = text::load_corpus(request.corpus_path);
  const auto& config = request.config;
  require_directory("rank.article_images", config.as<std::string>("rank.article_images"));
  require_directory("style.exemplars", config.as<std::string>("style.exemplars"));
  const auto stopwords = config.as<std::string>("corpus.stopwords");
  if (!stopwords.empty() && !fs::is_regular_file(stopwords)) {
    fail(ErrorKind::kNotFound, "stopword file not found: " + stopwords, {{"field", "corpus.stopwords"}});
  }

  const std::string run_id =
      request.run_id.empty() ? slugify(request.theme) + "-" + compact_time() + "-" + random_suffix() : request.run_id;
  const fs::path final_dir = run_dir(run_id);
  if (fs::exists(final_dir)) fail(ErrorKind::kConflict, "run '" + run_id + "' already exists", {{"run_id", run_id}});

  fs::create_directories(root_);
  const fs::path staging = root_ / (".staging-" + run_id + "-" + std::to_string(::getpid()) + "-" + random_suffix());
  struct Cleanup {
    fs::path path;
    bool keep = false;
    ~Cleanup() {
      std::error_code ec;
      if (!keep) fs::remove_all(path, ec);
    }
  } cleanup{staging};

  fs::create_directories(staging / "corpus");
  fs::copy_file(request.corpus_path, staging / "corpus" / "corpus.jsonl");
  if (!stopwords.empty()) fs::copy_file(stopwords, staging / "corpus" / "stopwords.txt");

  json inputs = {{"documents", corpus.size()}, {"article_images", 0}, {"missing_article_images", json::array()}};
  const fs::path corpus_dir = request.corpus_path.parent_path();
  std::size_t articles = 0;
  for (const auto& doc : corpus.documents) {
    if (doc.label != text::Label::kTheme) continue;
    auto it = doc.metadata.find("image");
    if (it == doc.metadata.end() || it->second.empty()) continue;
    const fs::path image_path = fs::path(it->second).is_absolute() ? fs::path(it->second) : corpus_dir / it->second;
    if (!fs::is_regular_file(image_path) || !detail::is_image_file(image_path)) {
      inputs["missing_article_images"].push_back(doc.id);
      continue;
    }
    const auto bytes = read_bytes(image_path);
    auto ext = image_path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    write_bytes_atomic(staging / "corpus" / "articles" / (content_id(bytes) + ext), bytes);
    ++articles;
  }
  if (const auto dir = config.as<std::string>("rank.article_images"); !dir.empty()) {
    articles += copy_images(dir, staging / "corpus" / "articles");
  }
  inputs["article_images"] = articles;
  std::size_t exemplars = 0;
  if (const auto dir = config.as<std::string>("style.exemplars"); !dir.empty()) {
    exemplars = copy_images(dir, staging / "corpus" / "style");
  }
  inputs["style_exemplars"] = exemplars;

  RunState run;
  run.run_id = run_id;
  run.theme = request.theme;
  run.mode = request.mode;
  run.stage = Stage::kCorpus;
  run.config = config;
  const auto spec = config.as<std::string>("provider.spec");
  if (spec.rfind("local:", 0) == 0) run.config.set("provider.spec", "local:" + fs::absolute(spec.substr(6)).string());
  run.created_at = utc_timestamp();
  run.artifacts["input"] = collect_artifacts(staging, "corpus");
  save_run(staging, run);
  EventLog(staging).append(Stage::kCorpus, "run_created",
                           {{"run_id", run_id}, {"theme", run.theme}, {"mode", to_string(run.mode)}, {"inputs", inputs}});

  std::error_code ec;
  fs::rename(staging, final_dir, ec);
  if (ec) fail(ErrorKind::kConflict, "run '" + run_id + "' already exists", {{"run_id", run_id}});
  cleanup.keep = true;
  log::info("created run " + run_id);
  return run;
}

RunState Pipeline::resume(const std::string& run_id) const {
  const fs::path dir = run_dir(run_id);
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "run not found: " + run_id, {{"run_id", run_id}});
  return load_run(dir);
}

std::vector<std::string> Pipeline::list_runs() const {
  std::vector<std::string> out;
  if (!fs::is_directory(root_)) return out;
  for (const auto& e : fs::directory_iterator(root_)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && name.front() != '.' && fs::exists(e.path() / "manifest.json")) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Pipeline::execute_stage(const fs::path& dir, RunState& run, const AdvanceOptions& options) {
  const Stage stage = run.stage;
  EventLog events(dir);
  if (const auto problems = validate_artifacts(dir, run); !problems.empty()) {
    fail(ErrorKind::kDataError, "artifacts of earlier stages are missing or modified", {{"problems", problems}});
  }
  events.append(stage, "stage_started");
  log::info("run " + run.run_id + ": " + std::string(to_string(stage)));
  clean_stage_output(dir, stage);

  detail::StageContext ctx{dir, run, [&] { return providers_(run.config); },
                           [&](const json& payload) {
                             events.append(stage, "progress", payload);
                             if (options.on_progress) options.on_progress(stage, payload);
                           },
                           options.should_stop};
  detail::run_stage(stage, ctx);

  run.artifacts[std::string(to_string(stage))] = stage_artifacts(dir, stage);
  run.stage = next_stage(stage, run.mode);
  save_run(dir, run);
  events.append(stage, "stage_completed",
                {{"next", to_string(run.stage)}, {"artifacts", run.artifacts[std::string(to_string(stage))].size()}});
  if (is_gate(run.stage)) {
    events.append(run.stage, "gate_pending", {{"candidates", gate_view(run.run_id, run, run.stage).items.size()}});
  }
}

AdvanceResult Pipeline::advance(const std::string& run_id, const AdvanceOptions& options) {
  const fs::path dir = run_dir(run_id);
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "run not found: " + run_id, {{"run_id", run_id}});
  RunLock lock(dir);
  AdvanceResult result;
  result.run = load_run(dir);
  RunState& run = result.run;
  int executed = 0;
  while (true) {
    if (run.stage == Stage::kDone) {
      result.status = AdvanceStatus::kDone;
      if (executed == 0) result.message = "run is DONE; nothing to advance";
      return result;
    }
    if (run.stage == Stage::kFailed) {
      result.status = AdvanceStatus::kFailed;
      result.message = run.failure ? run.failure->message : "run failed";
      return result;
    }
    if (options.max_stages > 0 && executed >= options.max_stages) break;
    if (options.until && run.stage == *options.until) break;
    if (is_gate(run.stage)) {
      if (!gate_is_automatic(run, run.stage, options)) {
        result.status = AdvanceStatus::kBlocked;
        result.message = "awaiting decision at " + std::string(to_string(run.stage));
        return result;
      }
      run = resolve_locked(dir, run, run.stage, default_selection(run_id, run, run.stage), options.actor);
      continue;
    }
    const Stage stage = run.stage;
    try {
      execute_stage(dir, run, options);
    } catch (const Interrupted& e) {
      EventLog(dir).append(stage, "stage_interrupted", {{"message", e.what()}});
      result.run = load_run(dir);
      result.status = AdvanceStatus::kInterrupted;
      result.message = e.what();
      return result;
    } catch (const std::exception& e) {
      RunState failed = load_run(dir);
      const auto* err = dynamic_cast<const Error*>(&e);
      failed.failure = Failure{stage, err ? std::string(canvas::to_string(err->kind())) : "internal", e.what(),
                               err ? err->details() : json::object()};
      failed.stage = Stage::kFailed;
      save_run(dir, failed);
      EventLog(dir).append(stage, "stage_failed",
                           {{"kind", failed.failure->kind}, {"message", e.what()}, {"details", failed.failure->details}});
      log::error("run " + run_id + ": " + std::string(to_string(stage)) + " failed: " + e.what());
      result.run = failed;
      result.executed.push_back(stage);
      result.status = AdvanceStatus::kFailed;
      result.message = e.what();
      return result;
    }
    result.executed.push_back(stage);
    ++executed;
  }
  if (is_gate(run.stage) && !gate_is_automatic(run, run.stage, options)) {
    result.status = AdvanceStatus::kBlocked;
    result.message = "awaiting decision at " + std::string(to_string(run.stage));
  } else {
    result.status = AdvanceStatus::kAdvanced;
  }
  return result;
}

json Pipeline::default_selection(const std::string& run_id, const RunState& run, Stage gate) const {
  if (gate == Stage::kTermReview) return {{"approve", true}};
  const auto view = gate_view(run_id, run, gate);
  if (view.items.empty()) fail(ErrorKind::kDataError, "gate " + std::string(to_string(gate)) + " has no candidates");
  return {{"ids", json::array({view.items.front().id})}};
}

GateView Pipeline::gate_view(const std::string& run_id, const RunState& run, Stage gate) const {
  const fs::path dir = run_dir(run_id);
  GateView view;
  view.gate = gate;
  switch (gate) {
    case Stage::kTermReview: {
      const auto terms = detail::read_terms(dir);
      for (const auto& [t, w] : terms.positives) view.items.push_back({t, {{"term", t}, {"weight", w}, {"polarity", "positive"}}});
      for (const auto& [t, w] : terms.negatives) view.items.push_back({t, {{"term", t}, {"weight", w}, {"polarity", "negative"}}});
      view.min_select = 1;
      view.max_select = view.items.size();
      break;
    }
    case Stage::kConceptSelection:
      for (const auto& item : detail::read_ranking(dir).at("items").get<std::vector<json>>()) {
        view.items.push_back({item.at("id").get<std::string>(), item});
      }
      break;
    case Stage::kCandidateSelection: {
      for (const auto& item : detail::read_candidates(dir).at("items").get<std::vector<json>>()) {
        json info = item;
        info.erase("z");
        view.items.push_back({item.at("id").get<std::string>(), info});
      }
      view.max_select = std::min<std::size_t>(run.config.as<std::size_t>("gates.candidate_max"), view.items.size());
      break;
    }
    case Stage::kFinalSelection:
      for (const auto& item : detail::read_styled(dir).at("items").get<std::vector<json>>()) {
        json info = item;
        info["file"] = "styled/" + item.at("id").get<std::string>() + ".png";
        view.items.push_back({item.at("id").get<std::string>(), info});
      }
      break;
    default:
      fail(ErrorKind::kNotFound, std::string(to_string(gate)) + " is not a gate");
  }
  return view;
}

GateView Pipeline::current_gate(const std::string& run_id) const {
  const auto run = resume(run_id);
  if (!is_gate(run.stage)) {
    fail(ErrorKind::kConflict, "no gate pending (run is at " + std::string(to_string(run.stage)) + ")",
         {{"stage", to_string(run.stage)}});
  }
  return gate_view(run_id, run, run.stage);
}

RunState Pipeline::resolve_gate(const std::string& run_id, Stage gate, const json& selection, const std::string& actor) {
  const fs::path dir = run_dir(run_id);
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "run not found: " + run_id, {{"run_id", run_id}});
  RunLock lock(dir);
  return resolve_locked(dir, load_run(dir), gate, selection, actor);
}

RunState Pipeline::resolve_locked(const fs::path& dir, RunState run, Stage gate, const json& selection,
                                  const std::string& actor) {
  const auto plan = run.planned();
  if (!is_gate(gate) || std::find(plan.begin(), plan.end(), gate) == plan.end()) {
    fail(ErrorKind::kNotFound, "unknown gate " + std::string(to_string(gate)) + " for this run", {{"gate", to_string(gate)}});
  }
  if (run.decision(gate) != nullptr) {
    fail(ErrorKind::kConflict, "gate already resolved", {{"gate", to_string(gate)}});
  }
  if (run.stage != gate) {
    fail(ErrorKind::kConflict,
         "run is not waiting at " + std::string(to_string(gate)) + " (stage " + std::string(to_string(run.stage)) + ")",
         {{"gate", to_string(gate)}, {"stage", to_string(run.stage)}});
  }
  const auto view = gate_view(run.run_id, run, gate);
  GateDecision decision;
  decision.gate = gate;
  decision.actor = actor.empty() ? "anonymous" : actor;
  decision.timestamp = utc_timestamp();

  if (gate == Stage::kTermReview) {
    if (!selection.is_object()) fail(ErrorKind::kUnprocessable, "term review selection must be an object");
    if (selection.contains("positives") || selection.contains("negatives")) {
      const auto pos = term_list(selection, "positives");
      const auto neg = term_list(selection, "negatives");
      decision.selection = {{"positives", pos}, {"negatives", neg}};
      decision.ids = pos;
      decision.ids.insert(decision.ids.end(), neg.begin(), neg.end());
    } else if (selection.value("approve", false)) {
      decision.selection = {{"approve", true}};
      for (const auto& item : view.items) decision.ids.push_back(item.id);
    } else {
      fail(ErrorKind::kUnprocessable, "term review needs {\"approve\": true} or edited positives/negatives");
    }
  } else {
    const auto ids = string_ids(selection);
    if (ids.size() < view.min_select || ids.size() > view.max_select) {
      fail(ErrorKind::kUnprocessable,
           std::string(to_string(gate)) + " accepts " + std::to_string(view.min_select) +
               (view.min_select == view.max_select ? "" : ".." + std::to_string(view.max_select)) + " id(s), got " +
               std::to_string(ids.size()),
           {{"min", view.min_select}, {"max", view.max_select}, {"got", ids.size()}});
    }
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) fail(ErrorKind::kUnprocessable, "selection contains duplicate ids");
    for (const auto& id : ids) {
      if (std::none_of(view.items.begin(), view.items.end(), [&](const GateItem& i) { return i.id == id; })) {
        fail(ErrorKind::kUnprocessable, "unknown candidate id '" + id + "'", {{"id", id}});
      }
    }
    decision.ids = ids;
    decision.selection = {{"ids", ids}};
    if (gate == Stage::kConceptSelection && selection.contains("query")) {
      if (!selection.at("query").is_string()) fail(ErrorKind::kUnprocessable, "query must be a string");
      decision.selection["query"] = selection.at("query");
    }
  }

  run.gate_decisions.push_back(decision);
  if (gate == Stage::kFinalSelection) {
    detail::write_final(dir, run, decision.ids.front());
    run.artifacts[std::string(to_string(gate))] = collect_artifacts(dir, stage_directory(gate));
  }
  run.stage = next_stage(gate, run.mode);
  save_run(dir, run);
  EventLog events(dir);
  events.append(gate, "gate_resolved", {{"ids", decision.ids}, {"actor", decision.actor}, {"next", to_string(run.stage)}});
  if (run.stage == Stage::kDone) events.append(Stage::kDone, "run_done", {{"final_id", decision.ids.front()}});
  return run;
}

RunState Pipeline::retry(const std::string& run_id) {
  const fs::path dir = run_dir(run_id);
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "run not found: " + run_id, {{"run_id", run_id}});
  RunLock lock(dir);
  RunState run = load_run(dir);
  if (run.stage != Stage::kFailed || !run.failure) {
    fail(ErrorKind::kConflict, "only FAILED runs can be retried (stage " + std::string(to_string(run.stage)) + ")");
  }
  const Stage stage = run.failure->stage;
  run.stage = stage;
  run.failure.reset();
  save_run(dir, run);
  EventLog(dir).append(stage, "run_retried");
  return run;
}

std::optional<fs::path> Pipeline::find_image(const std::string& run_id, const std::string& image_id) const {
  if (image_id.empty() || image_id.find_first_not_of("0123456789abcdef") != std::string::npos) return std::nullopt;
  const fs::path dir = run_dir(run_id);
  const std::string file = image_id + ".png";
  for (const fs::path& sub : {fs::path("rank/images"), fs::path("gan/samples"), fs::path("styled"),
                              fs::path(kAdhocDir), fs::path("harvest/terms/positive"), fs::path("harvest/terms/negative"),
                              fs::path("harvest/concept/unlabeled")}) {
    if (fs::is_regular_file(dir / sub / file)) return dir / sub / file;
  }
  return std::nullopt;
}

fs::path Pipeline::stylize_adhoc(const std::string& run_id, const std::string& content_id,
                                 std::optional<int> output_side) {
  const fs::path dir = run_dir(run_id);
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "run not found: " + run_id, {{"run_id", run_id}});
  RunLock lock(dir);
  RunState run = load_run(dir);
  const auto path = find_image(run_id, content_id);
  if (!path) fail(ErrorKind::kNotFound, "no image '" + content_id + "' in run " + run_id, {{"id", content_id}});
  auto config = run.config.style();
  if (output_side) config.output_side = *output_side;
  config.validate();
  image::ImageRecord content;
  content.id = content_id;
  content.pixels = image::read_image(*path);
  content.provenance = image::Provenance::kGenerated;
  const auto out = detail::stylize_into(dir / kAdhocDir, content, detail::read_reference(dir), config,
                                        detail::style_backbone(dir));
  auto& list = run.artifacts["adhoc"];
  const auto id = out.summary.at("id").get<std::string>();
  std::erase_if(list, [&](const Artifact& a) { return a.path.find(id) != std::string::npos; });
  for (auto& a : collect_artifacts(dir, kAdhocDir)) {
    if (a.path.find(id) != std::string::npos) list.push_back(std::move(a));
  }
  save_run(dir, run);
  EventLog(dir).append(run.stage, "adhoc_stylize", {{"content_id", content_id}, {"id", id}, {"output_side", config.output_side}});
  return out.png;
}

}  // namespace canvas::pipeline
