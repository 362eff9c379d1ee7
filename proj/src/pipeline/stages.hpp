#pragma once

#include <filesystem>
#include <functional>
#include <memory>

#include <nlohmann/json.hpp>

#include "concept_canvas/acquisition/provider.hpp"
#include "concept_canvas/dam/dam.hpp"
#include "concept_canvas/pipeline/pipeline.hpp"
#include "concept_canvas/style/style.hpp"
#include "concept_canvas/text/dtm.hpp"

namespace canvas::pipeline::detail {

struct StageContext {
  std::filesystem::path dir;
  const RunState& run;
  std::function<std::unique_ptr<acquisition::SearchProvider>()> provider;
  std::function<void(const nlohmann::json&)> progress;
  std::function<bool()> should_stop;
};

void run_stage(Stage stage, StageContext& ctx);

// Writes final/final.png and final/provenance.json for the chosen styled output.
void write_final(const std::filesystem::path& dir, const RunState& run, const std::string& styled_id);

text::DiscriminativeTermSet read_terms(const std::filesystem::path& dir);
// The term set the harvest used: the edited selection when present.
text::DiscriminativeTermSet effective_terms(const std::filesystem::path& dir, const RunState& run);
nlohmann::json read_ranking(const std::filesystem::path& dir);
nlohmann::json read_candidates(const std::filesystem::path& dir);
nlohmann::json read_styled(const std::filesystem::path& dir);
style::StyleReference read_reference(const std::filesystem::path& dir);
dam::VggBackbone style_backbone(const std::filesystem::path& dir);

struct StyledOutput {
  std::filesystem::path png;
  nlohmann::json summary;
};
// Stylizes one record into `out_dir` as <id>.png, <id>.json and <id>.losses.csv.
StyledOutput stylize_into(const std::filesystem::path& out_dir, const image::ImageRecord& content,
                          const style::StyleReference& reference, const style::StyleConfig& config,
                          const dam::VggBackbone& backbone);

bool is_image_file(const std::filesystem::path& path);

}  // namespace canvas::pipeline::detail
