#include "concept_canvas/pipeline/config.hpp"

#include <algorithm>
#include <cstdlib>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"

extern char** environ;

namespace canvas::pipeline {
using nlohmann::json;

namespace {

const std::map<std::string, json>& default_values() {
  static const std::map<std::string, json> values = [] {
    const style::StyleConfig style_defaults;
    const began::BeganConfig began_defaults;
    return std::map<std::string, json>{
        {"run.seed", 0},
        {"corpus.min_df", 2},
        {"corpus.max_df_fraction", 0.9},
        {"corpus.stopwords", ""},
        {"dtm.learning_rate", 0.1},
        {"dtm.l2_penalty", 1e-3},
        {"dtm.epochs", 500},
        {"dtm.k_pos", 15},
        {"dtm.k_neg", 15},
        {"provider.spec", ""},
        {"provider.query_param", "q"},
        {"provider.count_param", "n"},
        {"provider.results_pointer", "/results"},
        {"provider.url_field", "url"},
        {"provider.rate_limit", 5.0},
        {"provider.timeout_seconds", 20},
        {"harvest.per_term", 40},
        {"harvest.min_total", 20},
        {"harvest.min_side", 64},
        {"harvest.parallelism", 4},
        {"harvest.max_retries", 3},
        {"harvest.retry_base_seconds", 1.0},
        {"dam.learning_rate", 1e-4},
        {"dam.epochs", 10},
        {"dam.frozen_blocks", 3},
        {"dam.batch_size", 8},
        {"dam.image_side", 224},
        {"dam.holdout_fraction", 0.1},
        {"dam.width_divisor", 1},
        {"dam.backbone_weights", ""},
        {"dam.random_init", false},
        {"rank.top_k", 30},
        {"rank.article_images", ""},
        {"concept.query", ""},
        {"concept.target_count", 1000},
        {"began.iterations", began_defaults.iterations},
        {"began.batch_size", began_defaults.batch_size},
        {"began.image_side", began_defaults.image_side},
        {"began.learning_rate", began_defaults.learning_rate},
        {"began.gamma", began_defaults.gamma},
        {"began.lambda_k", began_defaults.lambda_k},
        {"began.k_initial", began_defaults.k_initial},
        {"began.filters", began_defaults.filters},
        {"began.embedding_dim", began_defaults.embedding_dim},
        {"began.checkpoint_interval", began_defaults.checkpoint_interval},
        {"began.adam_beta1", began_defaults.adam_beta1},
        {"began.keep_checkpoints", 2},
        {"generation.count", 16},
        {"gates.term_review", "manual"},
        {"gates.candidate_max", 4},
        {"gates.auto_advance", false},
        {"style.exemplars", ""},
        {"style.cell_side", 256},
        {"style.layers", style_defaults.style_layers},
        {"style.layer_weights", style_defaults.layer_weights},
        {"style.content_layer", style_defaults.content_layer},
        {"style.content_weight", style_defaults.content_weight},
        {"style.style_weight", style_defaults.style_weight},
        {"style.output_side", style_defaults.output_side},
        {"style.steps", style_defaults.steps},
        {"style.step_size", style_defaults.step_size},
        {"service.open_reads", true},
    };
  }();
  return values;
}

bool same_kind(const json& expected, const json& value) {
  if (expected.is_boolean()) return value.is_boolean();
  if (expected.is_number_integer()) return value.is_number_integer();
  if (expected.is_number()) return value.is_number();
  if (expected.is_string()) return value.is_string();
  if (expected.is_array()) {
    if (!value.is_array()) return false;
    if (expected.empty()) return true;
    return std::all_of(value.begin(), value.end(), [&](const json& v) { return same_kind(expected.front(), v); });
  }
  return false;
}

void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
  for (const auto& [key, value] : node.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten(value, path, out);
    } else {
      out[path] = value;
    }
  }
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.values_ = default_values();
  return c;
}

bool Config::known(const std::string& key) { return default_values().contains(key); }

std::vector<std::string> Config::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : default_values()) out.push_back(k);
  return out;
}

void Config::apply_toy() {
  merge(json{
      {"dam.image_side", 64},
      {"dam.width_divisor", 8},
      {"dam.epochs", 3},
      {"dam.learning_rate", 1e-3},
      {"dam.random_init", true},
      {"harvest.per_term", 3},
      {"harvest.min_total", 10},
      {"harvest.parallelism", 2},
      {"rank.top_k", 8},
      {"concept.target_count", 32},
      {"began.iterations", 40},
      {"began.batch_size", 8},
      {"began.image_side", 32},
      {"began.filters", 8},
      {"began.embedding_dim", 16},
      {"began.checkpoint_interval", 20},
      {"generation.count", 6},
      {"style.cell_side", 64},
      {"style.output_side", 64},
      {"style.steps", 10},
  });
}

void Config::set(const std::string& key, const json& value) {
  auto it = default_values().find(key);
  if (it == default_values().end()) {
    fail(ErrorKind::kInvalidArgument, "unknown config key '" + key + "'", {{"key", key}});
  }
  json v = value;
  if (it->second.is_number_float() && value.is_number_integer()) v = value.get<double>();
  if (!same_kind(it->second, v)) {
    fail(ErrorKind::kInvalidArgument,
         "config key '" + key + "' expects a value like " + it->second.dump() + ", got " + value.dump(),
         {{"key", key}});
  }
  values_[key] = std::move(v);
}

void Config::set_text(const std::string& key, const std::string& text) {
  auto it = default_values().find(key);
  if (it == default_values().end()) {
    fail(ErrorKind::kInvalidArgument, "unknown config key '" + key + "'", {{"key", key}});
  }
  const json& expected = it->second;
  if (expected.is_string()) {
    set(key, text);
    return;
  }
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error&) {
    if (expected.is_array()) {
      // Comma-separated shorthand for lists of names.
      parsed = json::array();
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto end = std::min(text.find(',', start), text.size());
        parsed.push_back(text.substr(start, end - start));
        start = end + 1;
      }
    } else {
      fail(ErrorKind::kInvalidArgument, "cannot parse '" + text + "' for config key '" + key + "'", {{"key", key}});
    }
  }
  set(key, parsed);
}

void Config::merge(const json& overrides) {
  if (!overrides.is_object()) fail(ErrorKind::kInvalidArgument, "config overrides must be a JSON object");
  std::map<std::string, json> flat_values;
  flatten(overrides, "", flat_values);
  for (const auto& [k, v] : flat_values) set(k, v);
}

void Config::merge_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kNotFound, "config file not found: " + path.string());
  merge(read_json(path));
}

void Config::merge_environment() {
  const std::string prefix = kEnvPrefix;
  std::vector<std::pair<std::string, std::string>> found;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    std::size_t start = 0;
    while (true) {
      const auto sep = name.find("__", start);
      std::string part = name.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      std::transform(part.begin(), part.end(), part.begin(), [](unsigned char c) { return std::tolower(c); });
      key += (key.empty() ? "" : ".") + part;
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    found.emplace_back(key, entry.substr(eq + 1));
  }
  std::sort(found.begin(), found.end());
  for (const auto& [k, v] : found) set_text(k, v);
}

const json& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::kInvalidArgument, "unknown config key '" + key + "'");
  return it->second;
}

json Config::flat() const {
  json out = json::object();
  for (const auto& [k, v] : values_) out[k] = v;
  return out;
}

json Config::nested() const {
  json out = json::object();
  for (const auto& [k, v] : values_) out[json::json_pointer("/" + [&] {
    std::string p = k;
    std::replace(p.begin(), p.end(), '.', '/');
    return p;
  }())] = v;
  return out;
}

Config Config::from_flat(const json& flat_values) {
  Config c = defaults();
  c.merge(flat_values);
  return c;
}

text::VocabularyOptions Config::vocabulary() const {
  return {as<std::size_t>("corpus.min_df"), as<double>("corpus.max_df_fraction")};
}

text::DtmConfig Config::dtm() const {
  text::DtmConfig c;
  c.learning_rate = as<double>("dtm.learning_rate");
  c.l2_penalty = as<double>("dtm.l2_penalty");
  c.epochs = as<int>("dtm.epochs");
  c.seed = seed();
  return c;
}

acquisition::HarvestOptions Config::harvest() const {
  acquisition::HarvestOptions o;
  o.per_term = as<std::size_t>("harvest.per_term");
  o.min_total = as<std::size_t>("harvest.min_total");
  o.min_side = as<int>("harvest.min_side");
  o.parallelism = as<int>("harvest.parallelism");
  o.retry.max_retries = as<int>("harvest.max_retries");
  o.retry.base_delay_seconds = as<double>("harvest.retry_base_seconds");
  return o;
}

acquisition::HttpProviderConfig Config::http_provider() const {
  acquisition::HttpProviderConfig c;
  c.query_param = as<std::string>("provider.query_param");
  c.count_param = as<std::string>("provider.count_param");
  c.results_pointer = as<std::string>("provider.results_pointer");
  c.url_field = as<std::string>("provider.url_field");
  c.rate_limit = as<double>("provider.rate_limit");
  c.timeout_seconds = as<int>("provider.timeout_seconds");
  return c;
}

dam::DamConfig Config::dam() const {
  dam::DamConfig c;
  c.learning_rate = as<double>("dam.learning_rate");
  c.epochs = as<int>("dam.epochs");
  c.frozen_blocks = as<int>("dam.frozen_blocks");
  c.batch_size = as<int>("dam.batch_size");
  c.image_side = as<int>("dam.image_side");
  c.holdout_fraction = as<double>("dam.holdout_fraction");
  c.seed = seed();
  return c;
}

began::BeganConfig Config::began() const {
  began::BeganConfig c;
  c.iterations = as<int>("began.iterations");
  c.batch_size = as<int>("began.batch_size");
  c.image_side = as<int>("began.image_side");
  c.learning_rate = as<double>("began.learning_rate");
  c.gamma = as<double>("began.gamma");
  c.lambda_k = as<double>("began.lambda_k");
  c.k_initial = as<double>("began.k_initial");
  c.filters = as<int>("began.filters");
  c.embedding_dim = as<int>("began.embedding_dim");
  c.checkpoint_interval = as<int>("began.checkpoint_interval");
  c.adam_beta1 = as<double>("began.adam_beta1");
  c.seed = seed();
  return c;
}

style::StyleConfig Config::style() const {
  style::StyleConfig c;
  c.style_layers = as<std::vector<std::string>>("style.layers");
  c.layer_weights = as<std::vector<double>>("style.layer_weights");
  c.content_layer = as<std::string>("style.content_layer");
  c.content_weight = as<double>("style.content_weight");
  c.style_weight = as<double>("style.style_weight");
  c.output_side = as<int>("style.output_side");
  c.steps = as<int>("style.steps");
  c.step_size = as<double>("style.step_size");
  c.seed = seed();
  return c;
}

void Config::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidArgument, "invalid config: " + m); };
  if (as<int>("corpus.min_df") < 1) bad("corpus.min_df must be >= 1");
  if (as<int>("dtm.k_pos") < 0 || as<int>("dtm.k_neg") < 0) bad("dtm.k_pos and dtm.k_neg must be >= 0");
  if (as<int>("dtm.k_pos") + as<int>("dtm.k_neg") == 0) bad("at least one discriminative term is required");
  if (as<int>("harvest.per_term") < 1) bad("harvest.per_term must be >= 1");
  if (as<int>("harvest.parallelism") < 1) bad("harvest.parallelism must be >= 1");
  const auto d = dam();
  if (d.image_side <= 0 || d.image_side % 32 != 0) bad("dam.image_side must be a positive multiple of 32");
  if (d.frozen_blocks < 0 || d.frozen_blocks > 5) bad("dam.frozen_blocks must be 0..5");
  if (as<int>("dam.width_divisor") < 1) bad("dam.width_divisor must be >= 1");
  if (as<int>("rank.top_k") < 1) bad("rank.top_k must be >= 1");
  if (as<int>("concept.target_count") < 1) bad("concept.target_count must be >= 1");
  began().validate();
  if (as<int>("generation.count") < 1) bad("generation.count must be >= 1");
  if (as<int>("gates.candidate_max") < 1) bad("gates.candidate_max must be >= 1");
  const auto review = as<std::string>("gates.term_review");
  if (review != "manual" && review != "auto") bad("gates.term_review must be 'manual' or 'auto'");
  style().validate();
  if (as<int>("style.cell_side") < 1) bad("style.cell_side must be >= 1");
}

}  // namespace canvas::pipeline
