#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "concept_canvas/common/rng.hpp"
#include "concept_canvas/image/image.hpp"
#include "concept_canvas/image/record.hpp"
#include "concept_canvas/text/corpus.hpp"

namespace canvas::fixtures {

struct PlantedCorpus {
  text::Corpus corpus;
  std::vector<std::string> theme_terms;  // 15, sorted
  std::vector<std::string> other_terms;  // 15, sorted
};

// Every THEME document carries all theme terms, every OTHER document all
// other terms; both classes share random filler words.
PlantedCorpus planted_corpus(std::size_t per_class, std::uint64_t seed);

std::string to_jsonl(const text::Corpus& corpus);

image::Image reddish_square(int side, Rng& rng);
image::Image white_noise(int width, int height, Rng& rng);
// Smooth disc-on-gradient scenes; the concept dataset for the generator.
image::Image disc_scene(int side, Rng& rng);
// Bold stripes and checks; style exemplars.
image::Image pattern_tile(int side, Rng& rng);

image::ImageRecord make_record(image::Image pixels, image::ClassLabel label, image::Provenance provenance,
                               const std::string& query = {});

// First `per_class` positives (reddish) then negatives (noise).
std::vector<image::ImageRecord> planted_images(std::size_t per_class, int side, std::uint64_t seed);

struct OfflineFixture {
  std::filesystem::path corpus;
  std::filesystem::path provider_root;
  std::filesystem::path style_dir;
  std::string theme;
  std::vector<std::string> theme_terms;
  std::vector<std::string> other_terms;
};

// Writes corpus.jsonl (with article images referenced from THEME documents),
// a local provider tree covering every planted term and the theme itself,
// and a directory of style exemplars.
OfflineFixture write_offline_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7);

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cc");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace canvas::fixtures
