#include "concept_canvas/acquisition/harvest.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <unordered_set>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/common/log.hpp"

namespace canvas::acquisition {
namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const HarvestStats& s) {
  j = {{"results", s.results},
       {"accepted", s.accepted},
       {"duplicates", s.duplicates},
       {"decode_failures", s.decode_failures},
       {"download_failures", s.download_failures},
       {"too_small", s.too_small},
       {"skipped_terms", s.skipped_terms},
       {"warnings", s.warnings}};
}

namespace {

struct Query {
  std::string term;
  image::ClassLabel label;
};

struct Task {
  std::size_t query = 0;
  SearchResult result;
};

struct Fetched {
  bool ok = false;
  bool decoded = false;
  std::string id;
  image::Image pixels;
};

void warn(HarvestStats& stats, std::string message) {
  log::warn(message);
  stats.warnings.push_back(std::move(message));
}

// Searches every query, then downloads and decodes all results with bounded
// parallelism. Output order is task order, independent of completion order.
std::vector<std::pair<Task, Fetched>> collect(const std::vector<Query>& queries, std::size_t per_query,
                                              const HarvestOptions& options, SearchProvider& provider,
                                              HarvestStats& stats) {
  RateLimiter limiter(provider.rate_limit());
  std::vector<Task> tasks;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<SearchResult> results;
    try {
      results = with_retry(options.retry, [&] {
        limiter.acquire();
        return provider.search(queries[q].term, per_query);
      });
    } catch (const AuthenticationError& e) {
      fail(ErrorKind::kUnauthorized, std::string("image search authentication failed: ") + e.what());
    } catch (const TransientError& e) {
      warn(stats, "search for '" + queries[q].term + "' failed after retries: " + e.what());
      stats.skipped_terms.push_back(queries[q].term);
      continue;
    }
    if (results.size() > per_query) results.resize(per_query);
    if (results.empty()) {
      warn(stats, "no results for '" + queries[q].term + "'; term skipped");
      stats.skipped_terms.push_back(queries[q].term);
      continue;
    }
    for (auto& r : results) tasks.push_back({q, std::move(r)});
  }
  stats.results += tasks.size();

  std::vector<Fetched> fetched(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> auth_failed{false};
  std::string auth_message;
  std::mutex auth_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size() && !auth_failed; i = next++) {
      auto& out = fetched[i];
      std::vector<std::uint8_t> bytes;
      try {
        bytes = with_retry(options.retry, [&] {
          limiter.acquire();
          return provider.fetch(tasks[i].result);
        });
      } catch (const AuthenticationError& e) {
        std::lock_guard lock(auth_mutex);
        auth_failed = true;
        auth_message = e.what();
        continue;
      } catch (const std::exception& e) {
        log::debug(std::string("download failed: ") + e.what());
        continue;
      }
      out.ok = true;
      out.id = content_id(bytes);
      try {
        out.pixels = image::decode(bytes);
        out.decoded = true;
      } catch (const Error&) {
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.parallelism, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (auth_failed) fail(ErrorKind::kUnauthorized, "image download authentication failed: " + auth_message);

  std::vector<std::pair<Task, Fetched>> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) out.emplace_back(std::move(tasks[i]), std::move(fetched[i]));
  return out;
}

HarvestResult assemble(const std::vector<Query>& queries, std::vector<std::pair<Task, Fetched>> items,
                       std::size_t cap, const HarvestOptions& options, const std::string& provider_name,
                       HarvestStats stats) {
  HarvestResult result;
  std::unordered_set<std::string> seen;
  for (auto& [task, f] : items) {
    if (!f.ok) {
      ++stats.download_failures;
      continue;
    }
    if (!f.decoded) {
      ++stats.decode_failures;
      continue;
    }
    if (std::min(f.pixels.width, f.pixels.height) < options.min_side) {
      ++stats.too_small;
      continue;
    }
    if (!seen.insert(f.id).second) {
      ++stats.duplicates;
      continue;
    }
    if (result.records.size() >= cap) continue;
    image::ImageRecord r;
    r.id = f.id;
    r.source = {provider_name, queries[task.query].term, task.result.locator};
    r.pixels = std::move(f.pixels);
    r.label = queries[task.query].label;
    r.provenance = image::Provenance::kHarvested;
    result.records.push_back(std::move(r));
  }
  std::sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  stats.accepted = result.records.size();
  if (stats.decode_failures > 0) warn(stats, std::to_string(stats.decode_failures) + " images failed to decode");
  if (result.records.size() < options.min_total) {
    nlohmann::json report = stats;
    fail(ErrorKind::kDataError,
         "harvest yielded " + std::to_string(result.records.size()) + " images, below the minimum of " +
             std::to_string(options.min_total),
         report);
  }
  result.stats = std::move(stats);
  return result;
}

}  // namespace

HarvestResult harvest_term_images(const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
                                  const HarvestOptions& options, SearchProvider& provider) {
  std::vector<Query> queries;
  for (const auto& t : positives) queries.push_back({t, image::ClassLabel::kPositive});
  for (const auto& t : negatives) queries.push_back({t, image::ClassLabel::kNegative});
  HarvestStats stats;
  auto items = collect(queries, options.per_term, options, provider, stats);
  return assemble(queries, std::move(items), std::numeric_limits<std::size_t>::max(), options, provider.name(),
                  std::move(stats));
}

HarvestResult harvest_term_images(const text::DiscriminativeTermSet& terms, const HarvestOptions& options,
                                  SearchProvider& provider) {
  return harvest_term_images(terms.positive_terms(), terms.negative_terms(), options, provider);
}

HarvestResult harvest_concept_images(const std::string& query, std::size_t target_count,
                                     const HarvestOptions& options, SearchProvider& provider) {
  if (target_count == 0) fail(ErrorKind::kInvalidArgument, "target_count must be positive");
  const std::vector<Query> queries = {{query, image::ClassLabel::kUnlabeled}};
  HarvestStats stats;
  auto items = collect(queries, target_count, options, provider, stats);
  auto result = assemble(queries, std::move(items), target_count, options, provider.name(), std::move(stats));
  if (result.records.size() < target_count) {
    warn(result.stats, "concept harvest shortfall: " + std::to_string(result.records.size()) + " of " +
                           std::to_string(target_count) + " images");
  }
  return result;
}

std::vector<image::ImageRecord> normalize_images(const std::vector<image::ImageRecord>& records, int side) {
  std::vector<image::ImageRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    image::ImageRecord copy = r;
    copy.pixels = image::normalize_square(r.pixels, side);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<fs::path> write_records(const fs::path& dir, const std::vector<image::ImageRecord>& records,
                                    const std::string& manifest_name) {
  std::vector<fs::path> written;
  std::string manifest;
  for (const auto& r : records) {
    std::string label(image::to_string(r.label));
    std::transform(label.begin(), label.end(), label.begin(), [](unsigned char c) { return std::tolower(c); });
    const fs::path rel = fs::path(label) / (r.id + ".png");
    image::write_png(dir / rel, r.pixels);
    written.push_back(rel);
    auto line = image::describe(r);
    line["file"] = rel.generic_string();
    manifest += line.dump() + "\n";
  }
  write_text_atomic(dir / manifest_name, manifest);
  written.push_back(manifest_name);
  return written;
}

std::vector<image::ImageRecord> read_records(const fs::path& dir, const std::string& manifest_name) {
  const std::string text = read_text(dir / manifest_name);
  std::vector<image::ImageRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    image::ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.source = {j.value("provider", ""), j.value("query", ""), j.value("locator", "")};
    r.label = image::parse_class_label(j.at("label").get<std::string>());
    r.provenance = image::parse_provenance(j.at("provenance").get<std::string>());
    r.pixels = image::read_image(dir / j.at("file").get<std::string>());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<image::ImageRecord> load_image_directory(const fs::path& dir, image::Provenance provenance) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kNotFound, "image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<image::ImageRecord> out;
  std::unordered_set<std::string> seen;
  for (const auto& f : files) {
    const auto bytes = read_bytes(f);
    image::ImageRecord r;
    r.id = content_id(bytes);
    if (!seen.insert(r.id).second) continue;
    try {
      r.pixels = image::decode(bytes);
    } catch (const Error& e) {
      log::warn("skipping undecodable image " + f.string());
      continue;
    }
    r.source = {"directory", "", f.filename().string()};
    r.provenance = provenance;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace canvas::acquisition
