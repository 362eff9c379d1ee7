#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/pipeline/config.hpp"

namespace canvas::pipeline {

enum class Stage {
  kCorpus,
  kDtm,
  kTermReview,
  kHarvest,
  kDamTrain,
  kRanking,
  kConceptSelection,
  kConceptHarvest,
  kGanTrain,
  kGeneration,
  kCandidateSelection,
  kStyleBuild,
  kStylize,
  kFinalSelection,
  kDone,
  kFailed,
};

enum class Mode { kGenerative, kDirect };

std::string_view to_string(Stage stage);
std::string_view to_string(Mode mode);
Stage parse_stage(std::string_view text);
Mode parse_mode(std::string_view text);  // case-insensitive

bool is_gate(Stage stage);
// Declared order for a mode, CORPUS through DONE.
std::vector<Stage> planned_stages(Mode mode);
Stage next_stage(Stage stage, Mode mode);

struct Artifact {
  std::string path;  // relative to the run directory
  std::string sha256;
};

struct GateDecision {
  Stage gate = Stage::kTermReview;
  nlohmann::json selection;   // as submitted
  std::vector<std::string> ids;
  std::string actor;
  std::string timestamp;
};

struct Failure {
  Stage stage = Stage::kCorpus;
  std::string kind;
  std::string message;
  nlohmann::json details;
};

struct RunState {
  std::string run_id;
  std::string theme;
  Mode mode = Mode::kGenerative;
  Stage stage = Stage::kCorpus;
  Config config = Config::defaults();
  std::map<std::string, std::vector<Artifact>> artifacts;  // stage name (or "input") -> files
  std::vector<GateDecision> gate_decisions;
  std::optional<Failure> failure;
  std::string created_at;

  const GateDecision* decision(Stage gate) const;
  std::vector<Stage> planned() const { return planned_stages(mode); }
};

void to_json(nlohmann::json& j, const Artifact& a);
void from_json(const nlohmann::json& j, Artifact& a);
void to_json(nlohmann::json& j, const GateDecision& d);
void from_json(const nlohmann::json& j, GateDecision& d);
void to_json(nlohmann::json& j, const RunState& r);
void from_json(const nlohmann::json& j, RunState& r);

// <root>/<run_id>
std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& run_id);

// Reads and schema-checks manifest.json. A missing run is NotFound; an
// unreadable manifest is DataError naming the last valid saved state.
RunState load_run(const std::filesystem::path& run_dir);
void save_run(const std::filesystem::path& run_dir, const RunState& run);

// Recomputes every listed artifact hash; returns the problems found.
std::vector<std::string> validate_artifacts(const std::filesystem::path& run_dir, const RunState& run);

// Every regular file under `subdir`, sorted, hashed.
std::vector<Artifact> collect_artifacts(const std::filesystem::path& run_dir, const std::filesystem::path& subdir);

struct Event {
  std::int64_t seq = 0;
  std::string stage;
  std::string kind;
  nlohmann::json payload;
  std::string time;
};

void to_json(nlohmann::json& j, const Event& e);

// Append-only events.jsonl with strictly increasing sequence numbers.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path run_dir) : path_(std::move(run_dir) / "events.jsonl") {}
  std::int64_t append(Stage stage, const std::string& kind, const nlohmann::json& payload = nlohmann::json::object());
  // Events with seq > after_seq, ascending.
  std::vector<Event> read(std::int64_t after_seq = 0, std::size_t limit = 0) const;
  std::int64_t last_seq() const;

 private:
  std::filesystem::path path_;
};

// Exclusive, non-blocking advisory lock on <run>/.lock held for the object's
// lifetime. A second holder (any process or thread) fails with Conflict.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace canvas::pipeline
