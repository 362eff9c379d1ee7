#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "concept_canvas/image/image.hpp"

namespace canvas::image {

enum class ClassLabel { kPositive, kNegative, kUnlabeled };
enum class Provenance { kArticle, kHarvested, kGenerated, kStyled };

std::string_view to_string(ClassLabel label);
std::string_view to_string(Provenance provenance);
ClassLabel parse_class_label(std::string_view text);
Provenance parse_provenance(std::string_view text);

struct ImageSource {
  std::string provider;
  std::string query;
  std::string locator;
};

struct ImageRecord {
  std::string id;  // content hash of the original encoded bytes
  ImageSource source;
  Image pixels;
  ClassLabel label = ClassLabel::kUnlabeled;
  Provenance provenance = Provenance::kHarvested;
};

// Record metadata without pixels, as written to manifests.
nlohmann::json describe(const ImageRecord& record);

}  // namespace canvas::image
