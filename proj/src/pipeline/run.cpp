#include "concept_canvas/pipeline/run.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"

namespace canvas::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<Stage, std::string_view> kStageNames[] = {
    {Stage::kCorpus, "CORPUS"},
    {Stage::kDtm, "DTM"},
    {Stage::kTermReview, "TERM_REVIEW"},
    {Stage::kHarvest, "HARVEST"},
    {Stage::kDamTrain, "DAM_TRAIN"},
    {Stage::kRanking, "RANKING"},
    {Stage::kConceptSelection, "CONCEPT_SELECTION"},
    {Stage::kConceptHarvest, "CONCEPT_HARVEST"},
    {Stage::kGanTrain, "GAN_TRAIN"},
    {Stage::kGeneration, "GENERATION"},
    {Stage::kCandidateSelection, "CANDIDATE_SELECTION"},
    {Stage::kStyleBuild, "STYLE_BUILD"},
    {Stage::kStylize, "STYLIZE"},
    {Stage::kFinalSelection, "FINAL_SELECTION"},
    {Stage::kDone, "DONE"},
    {Stage::kFailed, "FAILED"},
};

constexpr const char* kManifest = "manifest.json";
constexpr const char* kManifestBackup = "manifest.prev.json";

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& [s, name] : kStageNames) {
    if (s == stage) return name;
  }
  return "UNKNOWN";
}

std::string_view to_string(Mode mode) { return mode == Mode::kGenerative ? "GENERATIVE" : "DIRECT"; }

Stage parse_stage(std::string_view text) {
  for (const auto& [s, name] : kStageNames) {
    if (name == text) return s;
  }
  fail(ErrorKind::kNotFound, "unknown stage '" + std::string(text) + "'");
}

Mode parse_mode(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "GENERATIVE") return Mode::kGenerative;
  if (upper == "DIRECT") return Mode::kDirect;
  fail(ErrorKind::kInvalidArgument, "mode must be GENERATIVE or DIRECT, got '" + std::string(text) + "'");
}

bool is_gate(Stage stage) {
  return stage == Stage::kTermReview || stage == Stage::kConceptSelection || stage == Stage::kCandidateSelection ||
         stage == Stage::kFinalSelection;
}

std::vector<Stage> planned_stages(Mode mode) {
  std::vector<Stage> out;
  for (const auto& [s, name] : kStageNames) {
    if (s == Stage::kFailed) continue;
    if (mode == Mode::kDirect && (s == Stage::kConceptHarvest || s == Stage::kGanTrain ||
                                  s == Stage::kGeneration || s == Stage::kCandidateSelection)) {
      continue;
    }
    out.push_back(s);
  }
  return out;
}

Stage next_stage(Stage stage, Mode mode) {
  const auto plan = planned_stages(mode);
  auto it = std::find(plan.begin(), plan.end(), stage);
  if (it == plan.end() || stage == Stage::kDone) {
    fail(ErrorKind::kInvalidArgument, "no stage follows " + std::string(to_string(stage)));
  }
  return *(it + 1);
}

const GateDecision* RunState::decision(Stage gate) const {
  for (const auto& d : gate_decisions) {
    if (d.gate == gate) return &d;
  }
  return nullptr;
}

void to_json(json& j, const Artifact& a) { j = {{"path", a.path}, {"sha256", a.sha256}}; }

void from_json(const json& j, Artifact& a) {
  a.path = j.at("path").get<std::string>();
  a.sha256 = j.at("sha256").get<std::string>();
}

void to_json(json& j, const GateDecision& d) {
  j = {{"gate", to_string(d.gate)}, {"selection", d.selection}, {"ids", d.ids}, {"actor", d.actor},
       {"timestamp", d.timestamp}};
}

void from_json(const json& j, GateDecision& d) {
  d.gate = parse_stage(j.at("gate").get<std::string>());
  d.selection = j.at("selection");
  d.ids = j.at("ids").get<std::vector<std::string>>();
  d.actor = j.at("actor").get<std::string>();
  d.timestamp = j.at("timestamp").get<std::string>();
}

void to_json(json& j, const RunState& r) {
  j = {{"run_id", r.run_id},
       {"theme", r.theme},
       {"mode", to_string(r.mode)},
       {"stage", to_string(r.stage)},
       {"planned_stages", json::array()},
       {"config", r.config.flat()},
       {"artifacts", r.artifacts},
       {"gate_decisions", r.gate_decisions},
       {"failure", nullptr},
       {"created_at", r.created_at}};
  for (auto s : r.planned()) j["planned_stages"].push_back(to_string(s));
  if (r.failure) {
    j["failure"] = {{"stage", to_string(r.failure->stage)},
                    {"kind", r.failure->kind},
                    {"message", r.failure->message},
                    {"details", r.failure->details}};
  }
}

void from_json(const json& j, RunState& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.theme = j.at("theme").get<std::string>();
  r.mode = parse_mode(j.at("mode").get<std::string>());
  r.stage = parse_stage(j.at("stage").get<std::string>());
  r.config = Config::from_flat(j.at("config"));
  r.artifacts = j.at("artifacts").get<std::map<std::string, std::vector<Artifact>>>();
  r.gate_decisions = j.at("gate_decisions").get<std::vector<GateDecision>>();
  r.failure.reset();
  if (j.contains("failure") && !j.at("failure").is_null()) {
    const auto& f = j.at("failure");
    r.failure = Failure{parse_stage(f.at("stage").get<std::string>()), f.at("kind").get<std::string>(),
                        f.at("message").get<std::string>(), f.value("details", json::object())};
  }
  r.created_at = j.value("created_at", "");
}

fs::path run_directory(const fs::path& root, const std::string& run_id) {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.front() == '.') {
    fail(ErrorKind::kInvalidArgument, "invalid run id '" + run_id + "'");
  }
  return root / run_id;
}

RunState load_run(const fs::path& run_dir) {
  const fs::path manifest = run_dir / kManifest;
  if (!fs::exists(manifest)) fail(ErrorKind::kNotFound, "run not found: " + run_dir.filename().string());
  try {
    return json::parse(read_text(manifest)).get<RunState>();
  } catch (const std::exception& e) {
    json details = {{"manifest", manifest.string()}, {"reason", e.what()}};
    try {
      const auto prev = json::parse(read_text(run_dir / kManifestBackup));
      details["last_valid_stage"] = prev.at("stage");
      details["last_valid_manifest"] = (run_dir / kManifestBackup).string();
    } catch (const std::exception&) {
      details["last_valid_stage"] = nullptr;
    }
    fail(ErrorKind::kDataError, "corrupt run manifest " + manifest.string() + ": " + e.what(), details);
  }
}

void save_run(const fs::path& run_dir, const RunState& run) {
  const std::string text = json(run).dump(2) + "\n";
  write_text_atomic(run_dir / kManifest, text);
  write_text_atomic(run_dir / kManifestBackup, text);
}

std::vector<std::string> validate_artifacts(const fs::path& run_dir, const RunState& run) {
  std::vector<std::string> problems;
  for (const auto& [stage, list] : run.artifacts) {
    for (const auto& a : list) {
      const fs::path p = run_dir / a.path;
      if (!fs::is_regular_file(p)) {
        problems.push_back(stage + ": missing " + a.path);
      } else if (sha256_file(p) != a.sha256) {
        problems.push_back(stage + ": hash mismatch " + a.path);
      }
    }
  }
  return problems;
}

std::vector<Artifact> collect_artifacts(const fs::path& run_dir, const fs::path& subdir) {
  std::vector<Artifact> out;
  const fs::path base = run_dir / subdir;
  if (!fs::exists(base)) return out;
  std::vector<fs::path> files;
  if (fs::is_regular_file(base)) {
    files.push_back(base);
  } else {
    for (const auto& e : fs::recursive_directory_iterator(base)) {
      if (e.is_regular_file() && e.path().filename().string().rfind(".tmp.", 0) != 0) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back({fs::relative(f, run_dir).generic_string(), sha256_file(f)});
  return out;
}

void to_json(json& j, const Event& e) {
  j = {{"seq", e.seq}, {"stage", e.stage}, {"kind", e.kind}, {"payload", e.payload}, {"time", e.time}};
}

std::int64_t EventLog::last_seq() const {
  std::ifstream in(path_);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) return 0;
  try {
    return json::parse(last).at("seq").get<std::int64_t>();
  } catch (const std::exception&) {
    fail(ErrorKind::kDataError, "corrupt event log " + path_.string());
  }
}

std::int64_t EventLog::append(Stage stage, const std::string& kind, const json& payload) {
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorKind::kInternal, "cannot open event log " + path_.string());
  ::flock(fd, LOCK_EX);
  const std::int64_t seq = last_seq() + 1;
  const std::string line =
      json({{"seq", seq}, {"stage", to_string(stage)}, {"kind", kind}, {"payload", payload}, {"time", utc_timestamp()}})
          .dump() +
      "\n";
  const auto written = ::write(fd, line.data(), line.size());
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) fail(ErrorKind::kInternal, "short write to event log");
  return seq;
}

std::vector<Event> EventLog::read(std::int64_t after_seq, std::size_t limit) const {
  std::vector<Event> out;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      continue;  // a torn trailing line from a concurrent append
    }
    Event e{j.at("seq").get<std::int64_t>(), j.at("stage").get<std::string>(), j.at("kind").get<std::string>(),
            j.at("payload"), j.value("time", "")};
    if (e.seq <= after_seq) continue;
    out.push_back(std::move(e));
    if (limit != 0 && out.size() >= limit) break;
  }
  return out;
}

RunLock::RunLock(const fs::path& run_dir) {
  const fs::path lock_path = run_dir / ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) fail(ErrorKind::kNotFound, "cannot open run lock " + lock_path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    fail(ErrorKind::kConflict, "run " + run_dir.filename().string() + " is busy (locked by another process)",
         {{"run_id", run_dir.filename().string()}});
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace canvas::pipeline
