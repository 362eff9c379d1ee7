#include "fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>

#include <nlohmann/json.hpp>

#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"

namespace canvas::fixtures {
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kThemeTerms = {"robot",   "neural",   "algorithm", "automation", "machine",
                                              "learning", "computer", "software",  "silicon",    "chatbot",
                                              "sensor",  "digital",  "network",   "android",    "cyborg"};
const std::vector<std::string> kOtherTerms = {"garden", "recipe",  "harvest", "soccer",  "opera",
                                              "cattle", "wedding", "pottery", "sailing", "bakery",
                                              "meadow", "violin",  "tomato",  "poetry",  "canyon"};
const std::vector<std::string> kFiller = {"report", "city",   "week",   "people", "story",  "family",
                                          "market", "school", "summer", "winter", "travel", "health",
                                          "river",  "street", "money",  "house",  "paper",  "letter"};

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

PlantedCorpus planted_corpus(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  PlantedCorpus out;
  out.theme_terms = kThemeTerms;
  out.other_terms = kOtherTerms;
  std::sort(out.theme_terms.begin(), out.theme_terms.end());
  std::sort(out.other_terms.begin(), out.other_terms.end());
  auto make = [&](const std::string& prefix, std::size_t i, const std::vector<std::string>& planted,
                  text::Label label) {
    std::vector<std::string> words = planted;
    for (int f = 0; f < 6; ++f) words.push_back(kFiller[rng.below(kFiller.size())]);
    for (std::size_t j = words.size(); j > 1; --j) std::swap(words[j - 1], words[rng.below(j)]);
    std::string textv = "The";
    for (const auto& w : words) textv += " " + w + (rng.below(4) == 0 ? "," : "");
    textv += ".";
    text::Document d;
    d.id = prefix + std::to_string(i);
    d.text = textv;
    d.label = label;
    return d;
  };
  for (std::size_t i = 0; i < per_class; ++i) {
    out.corpus.documents.push_back(make("t", i, kThemeTerms, text::Label::kTheme));
    out.corpus.documents.push_back(make("o", i, kOtherTerms, text::Label::kOther));
  }
  return out;
}

std::string to_jsonl(const text::Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    nlohmann::json j = {{"id", d.id}, {"text", d.text}, {"label", std::string(text::to_string(d.label))}};
    if (!d.metadata.empty()) j["meta"] = d.metadata;
    out += j.dump() + "\n";
  }
  return out;
}

image::Image reddish_square(int side, Rng& rng) {
  image::Image img(side, side);
  const double base = 170 + 60 * rng.uniform();
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      img.at(x, y, 0) = clamp8(base + 12 * (rng.uniform() - 0.5));
      img.at(x, y, 1) = clamp8(20 + 20 * rng.uniform());
      img.at(x, y, 2) = clamp8(20 + 20 * rng.uniform());
    }
  }
  return img;
}

image::Image white_noise(int width, int height, Rng& rng) {
  image::Image img(width, height);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

image::Image disc_scene(int side, Rng& rng) {
  image::Image img(side, side);
  const double cx = side * (0.3 + 0.4 * rng.uniform());
  const double cy = side * (0.3 + 0.4 * rng.uniform());
  const double r = side * (0.15 + 0.15 * rng.uniform());
  const double hue[3] = {200 + 50 * rng.uniform(), 120 + 80 * rng.uniform(), 40 * rng.uniform()};
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const double inside = std::clamp(r + 0.5 - d, 0.0, 1.0);
      const double bg = 40 + 120.0 * y / side;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp8(inside * hue[c] + (1 - inside) * bg * (c == 2 ? 1.2 : 0.8));
    }
  }
  return img;
}

image::Image pattern_tile(int side, Rng& rng) {
  image::Image img(side, side);
  const int period = 4 + static_cast<int>(rng.below(8));
  const bool checks = rng.below(2) == 0;
  double a[3], b[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = 255 * rng.uniform();
    b[c] = 255 * rng.uniform();
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool on = checks ? ((x / period + y / period) % 2 == 0) : ((x + y) / period % 2 == 0);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp8(on ? a[c] : b[c]);
    }
  }
  return img;
}

image::ImageRecord make_record(image::Image pixels, image::ClassLabel label, image::Provenance provenance,
                               const std::string& query) {
  image::ImageRecord r;
  r.id = content_id(image::encode_png(pixels));
  r.pixels = std::move(pixels);
  r.label = label;
  r.provenance = provenance;
  r.source = {"fixture", query, ""};
  return r;
}

std::vector<image::ImageRecord> planted_images(std::size_t per_class, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<image::ImageRecord> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back(make_record(reddish_square(side, rng), image::ClassLabel::kPositive, image::Provenance::kHarvested));
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back(
        make_record(white_noise(side, side, rng), image::ClassLabel::kNegative, image::Provenance::kHarvested));
  }
  return out;
}

OfflineFixture write_offline_fixture(const fs::path& dir, std::uint64_t seed) {
  Rng rng(seed);
  OfflineFixture fx;
  fx.theme = "ai";
  fs::create_directories(dir);
  fx.provider_root = dir / "images";
  fx.style_dir = dir / "style";
  fx.corpus = dir / "tiny.jsonl";

  auto planted = planted_corpus(10, seed);
  fx.theme_terms = planted.theme_terms;
  fx.other_terms = planted.other_terms;

  // Article images: half theme-looking, half not.
  fs::create_directories(dir / "articles");
  std::size_t article = 0;
  for (auto& d : planted.corpus.documents) {
    if (d.label != text::Label::kTheme) continue;
    const auto img = article % 2 == 0 ? reddish_square(72, rng) : white_noise(80, 72, rng);
    const std::string rel = "articles/a" + std::to_string(article++) + ".png";
    image::write_png(dir / rel, img);
    d.metadata["image"] = rel;
  }
  write_text_atomic(fx.corpus, to_jsonl(planted.corpus));

  auto write_term = [&](const std::string& term, bool positive, int count) {
    const fs::path tdir = fx.provider_root / slugify(term);
    fs::create_directories(tdir);
    for (int i = 0; i < count; ++i) {
      const auto img = positive ? reddish_square(72, rng) : white_noise(72, 80, rng);
      image::write_png(tdir / ("img" + std::to_string(i) + ".png"), img);
    }
  };
  for (const auto& t : fx.theme_terms) write_term(t, true, 3);
  for (const auto& t : fx.other_terms) write_term(t, false, 3);

  const fs::path concept_dir = fx.provider_root / slugify(fx.theme);
  fs::create_directories(concept_dir);
  for (int i = 0; i < 40; ++i) {
    image::write_png(concept_dir / ("c" + std::to_string(i) + ".png"), disc_scene(64, rng));
  }

  fs::create_directories(fx.style_dir);
  for (int i = 0; i < 5; ++i) {
    image::write_png(fx.style_dir / ("s" + std::to_string(i) + ".png"), pattern_tile(96, rng));
  }
  return fx;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
           std::to_string(std::chrono::steady_clock::now().time_since_epoch().count() % 1000000));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

}  // namespace canvas::fixtures
