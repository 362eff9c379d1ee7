#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/acquisition/harvest.hpp"
#include "concept_canvas/acquisition/provider.hpp"
#include "concept_canvas/began/began.hpp"
#include "concept_canvas/dam/dam.hpp"
#include "concept_canvas/style/style.hpp"
#include "concept_canvas/text/corpus.hpp"
#include "concept_canvas/text/dtm.hpp"

namespace canvas::pipeline {

inline constexpr const char* kEnvPrefix = "CONCEPT_CANVAS__";

// Flat dotted-key configuration ("began.gamma"). Every key has a built-in
// default whose JSON type fixes the key's type; unknown keys are rejected.
class Config {
 public:
  static Config defaults();
  static bool known(const std::string& key);
  static std::vector<std::string> keys();

  // Reduced widths and short schedules for offline runs.
  void apply_toy();
  // Nested ({"began": {"gamma": 0.5}}) or flat ({"began.gamma": 0.5}) objects.
  void merge(const nlohmann::json& overrides);
  void merge_file(const std::filesystem::path& path);
  // CONCEPT_CANVAS__BEGAN__GAMMA=0.5 -> began.gamma
  void merge_environment();
  void set(const std::string& key, const nlohmann::json& value);
  // Parses text according to the key's type.
  void set_text(const std::string& key, const std::string& text);

  const nlohmann::json& get(const std::string& key) const;
  template <typename T>
  T as(const std::string& key) const {
    return get(key).get<T>();
  }

  nlohmann::json flat() const;
  nlohmann::json nested() const;
  static Config from_flat(const nlohmann::json& flat);

  // Typed views consumed by the stages.
  text::VocabularyOptions vocabulary() const;
  text::DtmConfig dtm() const;
  acquisition::HarvestOptions harvest() const;
  acquisition::HttpProviderConfig http_provider() const;
  dam::DamConfig dam() const;
  began::BeganConfig began() const;
  style::StyleConfig style() const;
  std::uint64_t seed() const { return as<std::uint64_t>("run.seed"); }

  // Builds every typed view and checks cross-key constraints.
  void validate() const;

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, nlohmann::json> values_;
};

}  // namespace canvas::pipeline
