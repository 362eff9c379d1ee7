#include "concept_canvas/image/record.hpp"

#include "concept_canvas/common/error.hpp"

namespace canvas::image {

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::kPositive: return "POSITIVE";
    case ClassLabel::kNegative: return "NEGATIVE";
    case ClassLabel::kUnlabeled: return "UNLABELED";
  }
  return "UNLABELED";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kArticle: return "ARTICLE";
    case Provenance::kHarvested: return "HARVESTED";
    case Provenance::kGenerated: return "GENERATED";
    case Provenance::kStyled: return "STYLED";
  }
  return "HARVESTED";
}

ClassLabel parse_class_label(std::string_view text) {
  if (text == "POSITIVE") return ClassLabel::kPositive;
  if (text == "NEGATIVE") return ClassLabel::kNegative;
  if (text == "UNLABELED") return ClassLabel::kUnlabeled;
  fail(ErrorKind::kDataError, "unknown class label '" + std::string(text) + "'");
}

Provenance parse_provenance(std::string_view text) {
  if (text == "ARTICLE") return Provenance::kArticle;
  if (text == "HARVESTED") return Provenance::kHarvested;
  if (text == "GENERATED") return Provenance::kGenerated;
  if (text == "STYLED") return Provenance::kStyled;
  fail(ErrorKind::kDataError, "unknown provenance '" + std::string(text) + "'");
}

nlohmann::json describe(const ImageRecord& record) {
  return {{"id", record.id},
          {"provider", record.source.provider},
          {"query", record.source.query},
          {"locator", record.source.locator},
          {"label", to_string(record.label)},
          {"provenance", to_string(record.provenance)},
          {"width", record.pixels.width},
          {"height", record.pixels.height}};
}

}  // namespace canvas::image
