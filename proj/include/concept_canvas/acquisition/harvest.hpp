#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_canvas/acquisition/provider.hpp"
#include "concept_canvas/image/record.hpp"
#include "concept_canvas/text/dtm.hpp"

namespace canvas::acquisition {

struct HarvestOptions {
  std::size_t per_term = 40;
  std::size_t min_total = 1;  // fewer surviving records is fatal
  int min_side = 64;
  int parallelism = 4;
  RetryPolicy retry;
};

struct HarvestStats {
  std::size_t results = 0;
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::size_t decode_failures = 0;
  std::size_t download_failures = 0;
  std::size_t too_small = 0;
  std::vector<std::string> skipped_terms;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const HarvestStats& s);

struct HarvestResult {
  std::vector<image::ImageRecord> records;  // sorted by id, unique ids
  HarvestStats stats;
};

// Images for each positive (POSITIVE) and negative (NEGATIVE) term; the
// first query to produce a given image owns it.
HarvestResult harvest_term_images(const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
                                  const HarvestOptions& options, SearchProvider& provider);
HarvestResult harvest_term_images(const text::DiscriminativeTermSet& terms, const HarvestOptions& options,
                                  SearchProvider& provider);

// UNLABELED images for one concept query, capped at target_count.
HarvestResult harvest_concept_images(const std::string& query, std::size_t target_count,
                                     const HarvestOptions& options, SearchProvider& provider);

std::vector<image::ImageRecord> normalize_images(const std::vector<image::ImageRecord>& records, int side);

// <dir>/<label>/<id>.png plus one manifest.jsonl line per record. Returns
// the written files relative to `dir`.
std::vector<std::filesystem::path> write_records(const std::filesystem::path& dir,
                                                 const std::vector<image::ImageRecord>& records,
                                                 const std::string& manifest_name = "manifest.jsonl");
std::vector<image::ImageRecord> read_records(const std::filesystem::path& dir,
                                             const std::string& manifest_name = "manifest.jsonl");

// Decodes every image under a directory (sorted by file name) as records.
std::vector<image::ImageRecord> load_image_directory(const std::filesystem::path& dir, image::Provenance provenance);

}  // namespace canvas::acquisition
