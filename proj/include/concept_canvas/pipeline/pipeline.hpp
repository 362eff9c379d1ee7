#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/acquisition/provider.hpp"
#include "concept_canvas/pipeline/config.hpp"
#include "concept_canvas/pipeline/run.hpp"

namespace canvas::pipeline {

struct CreateRequest {
  std::string theme;
  std::filesystem::path corpus_path;
  Mode mode = Mode::kGenerative;
  Config config = Config::defaults();
  std::string run_id;  // generated from the theme when empty
};

struct AdvanceOptions {
  // Resolve every gate with its default selection (rank-1, first candidate).
  bool auto_gates = false;
  // Stop after this many executed stages; 0 runs until blocked, DONE or FAILED.
  int max_stages = 1;
  // Do not execute past this stage (it may be reached, not run).
  std::optional<Stage> until;
  std::string actor = "auto";
  std::function<bool()> should_stop;
  std::function<void(Stage, const nlohmann::json&)> on_progress;
};

enum class AdvanceStatus { kAdvanced, kBlocked, kDone, kFailed, kInterrupted };
std::string_view to_string(AdvanceStatus status);

struct AdvanceResult {
  RunState run;
  AdvanceStatus status = AdvanceStatus::kAdvanced;
  std::vector<Stage> executed;
  std::string message;
};

struct GateItem {
  std::string id;
  nlohmann::json info;  // rank/score, weight/polarity, file path, ...
};

struct GateView {
  Stage gate = Stage::kTermReview;
  std::size_t min_select = 1;
  std::size_t max_select = 1;
  std::vector<GateItem> items;
};

nlohmann::json to_json(const GateView& view, std::size_t page = 1, std::size_t size = 0);

using ProviderFactory = std::function<std::unique_ptr<acquisition::SearchProvider>(const Config&)>;

// Thrown by a stage when should_stop fires; the run stays at that stage.
class Interrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Pipeline {
 public:
  explicit Pipeline(std::filesystem::path root, ProviderFactory providers = {});

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const { return run_directory(root_, run_id); }

  RunState create_run(const CreateRequest& request);
  // Lock-free snapshot reconstructed from the manifest.
  RunState resume(const std::string& run_id) const;
  std::vector<std::string> list_runs() const;

  AdvanceResult advance(const std::string& run_id, const AdvanceOptions& options = {});
  RunState resolve_gate(const std::string& run_id, Stage gate, const nlohmann::json& selection,
                        const std::string& actor);
  // Puts a FAILED run back at the stage that failed.
  RunState retry(const std::string& run_id);

  // NotFound for unknown runs; Conflict when no gate is pending.
  GateView current_gate(const std::string& run_id) const;
  GateView gate_view(const std::string& run_id, const RunState& run, Stage gate) const;

  EventLog events(const std::string& run_id) const { return EventLog(run_dir(run_id)); }

  // Resolves an image id (ranked, harvested, generated or styled) to its file.
  std::optional<std::filesystem::path> find_image(const std::string& run_id, const std::string& image_id) const;

  // Stylizes any known run image outside the stage order; returns the PNG path.
  std::filesystem::path stylize_adhoc(const std::string& run_id, const std::string& content_id,
                                      std::optional<int> output_side);

  // Default selection used by --gates auto.
  nlohmann::json default_selection(const std::string& run_id, const RunState& run, Stage gate) const;

 private:
  RunState resolve_locked(const std::filesystem::path& dir, RunState run, Stage gate,
                          const nlohmann::json& selection, const std::string& actor);
  void execute_stage(const std::filesystem::path& dir, RunState& run, const AdvanceOptions& options);

  std::filesystem::path root_;
  ProviderFactory providers_;
};

// Stage output directory relative to the run directory.
std::filesystem::path stage_directory(Stage stage);

}  // namespace canvas::pipeline
