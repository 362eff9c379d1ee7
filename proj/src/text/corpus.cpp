#include "concept_canvas/text/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "stopwords_en.inc"

namespace canvas::text {

std::string_view to_string(Label label) { return label == Label::kTheme ? "THEME" : "OTHER"; }

Label parse_label(std::string_view value) {
  if (value == "THEME") return Label::kTheme;
  if (value == "OTHER") return Label::kOther;
  fail(ErrorKind::kDataError, "unknown label value '" + std::string(value) + "'");
}

std::size_t Corpus::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(documents.begin(), documents.end(),
                                                [&](const Document& d) { return d.label == label; }));
}

Corpus parse_corpus(std::string_view contents) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& what) -> void {
    fail(ErrorKind::kDataError, "line " + std::to_string(line_no) + ": " + what, {{"line", line_no}});
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      bad(std::string("malformed record: ") + e.what());
    }
    if (!record.is_object()) bad("record is not an object");
    for (const char* field : {"id", "text", "label"}) {
      if (!record.contains(field) || !record[field].is_string()) {
        bad(std::string("missing or non-string field '") + field + "'");
      }
    }
    Document doc;
    doc.id = record["id"].get<std::string>();
    doc.text = record["text"].get<std::string>();
    if (doc.id.empty()) bad("empty id");
    const auto label = record["label"].get<std::string>();
    if (label != "THEME" && label != "OTHER") bad("unknown label value '" + label + "'");
    doc.label = parse_label(label);
    if (record.contains("meta")) {
      if (!record["meta"].is_object()) bad("'meta' must be an object");
      for (const auto& [key, value] : record["meta"].items()) {
        doc.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    if (!seen.insert(doc.id).second) bad("duplicate id '" + doc.id + "'");
    corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty()) fail(ErrorKind::kDataError, "empty corpus");
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(ErrorKind::kNotFound, "cannot read corpus " + path.string());
  return parse_corpus(read_text(path));
}

namespace {

std::unordered_set<std::string> parse_word_lines(std::string_view text) {
  std::unordered_set<std::string> words;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::string word = line.substr(start);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(word));
  }
  return words;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

StopwordList StopwordList::english() {
  static const StopwordList list(parse_word_lines(kEnglishStopwords));
  return list;
}

StopwordList StopwordList::from_file(const std::filesystem::path& path) {
  return StopwordList(parse_word_lines(read_text(path)));
}

std::vector<std::string> tokenize(std::string_view text, const StopwordList& stopwords) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2 && !stopwords.contains(current)) tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> tokenize(std::string_view text) { return tokenize(text, StopwordList::english()); }

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  std::sort(terms_.begin(), terms_.end());
  terms_.erase(std::unique(terms_.begin(), terms_.end()), terms_.end());
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::ptrdiff_t Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::string Vocabulary::hash() const {
  std::string joined;
  for (const auto& t : terms_) {
    joined += t;
    joined += '\n';
  }
  return sha256_hex(joined);
}

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const StopwordList& stopwords) {
  TokenizedCorpus out;
  out.ids.reserve(corpus.size());
  for (const auto& doc : corpus.documents) {
    out.ids.push_back(doc.id);
    out.labels.push_back(doc.label);
    out.tokens.push_back(tokenize(doc.text, stopwords));
  }
  return out;
}

namespace {

std::map<std::string, std::size_t> document_frequencies(const TokenizedCorpus& corpus) {
  std::map<std::string, std::size_t> df;
  for (const auto& tokens : corpus.tokens) {
    std::vector<std::string> unique = tokens;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto& t : unique) ++df[t];
  }
  return df;
}

}  // namespace

Vocabulary build_vocabulary(const TokenizedCorpus& corpus, const VocabularyOptions& options) {
  if (options.min_df < 1) fail(ErrorKind::kInvalidArgument, "min_df must be >= 1");
  if (!(options.max_df_fraction > 0.0 && options.max_df_fraction <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "max_df_fraction must be in (0, 1]");
  }
  const double max_df = options.max_df_fraction * static_cast<double>(corpus.tokens.size());
  std::vector<std::string> terms;
  for (const auto& [term, df] : document_frequencies(corpus)) {
    if (df >= options.min_df && static_cast<double>(df) <= max_df) terms.push_back(term);
  }
  if (terms.empty()) fail(ErrorKind::kDataError, "vocabulary is empty after df filtering");
  return Vocabulary(std::move(terms));
}

Vocabulary build_vocabulary(const Corpus& corpus, const VocabularyOptions& options,
                            const StopwordList& stopwords) {
  return build_vocabulary(tokenize_corpus(corpus, stopwords), options);
}

DocTermMatrix tfidf_vectorize(const TokenizedCorpus& corpus, const Vocabulary& vocab) {
  const std::size_t n_docs = corpus.tokens.size();
  const std::size_t n_terms = vocab.size();
  DocTermMatrix m;
  m.row_ids = corpus.ids;
  m.cols = n_terms;
  m.values.assign(n_docs * n_terms, 0.0);

  std::vector<std::size_t> df(n_terms, 0);
  for (std::size_t d = 0; d < n_docs; ++d) {
    double* row = m.values.data() + d * n_terms;
    for (const auto& token : corpus.tokens[d]) {
      const auto col = vocab.index_of(token);
      if (col >= 0) row[col] += 1.0;
    }
    for (std::size_t t = 0; t < n_terms; ++t) {
      if (row[t] > 0.0) ++df[t];
    }
  }
  std::vector<double> idf(n_terms);
  for (std::size_t t = 0; t < n_terms; ++t) {
    idf[t] = std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }
  for (std::size_t d = 0; d < n_docs; ++d) {
    double* row = m.values.data() + d * n_terms;
    double norm2 = 0.0;
    for (std::size_t t = 0; t < n_terms; ++t) {
      row[t] *= idf[t];
      norm2 += row[t] * row[t];
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t t = 0; t < n_terms; ++t) row[t] *= inv;
    }
  }
  return m;
}

DocTermMatrix tfidf_vectorize(const Corpus& corpus, const Vocabulary& vocab, const StopwordList& stopwords) {
  return tfidf_vectorize(tokenize_corpus(corpus, stopwords), vocab);
}

std::vector<int> binary_labels(const TokenizedCorpus& corpus) {
  std::vector<int> labels;
  labels.reserve(corpus.labels.size());
  for (auto l : corpus.labels) labels.push_back(l == Label::kTheme ? 1 : 0);
  return labels;
}

}  // namespace canvas::text
