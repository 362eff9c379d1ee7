#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace canvas::text {

enum class Label { kTheme, kOther };

std::string_view to_string(Label label);
Label parse_label(std::string_view value);  // throws on anything but THEME / OTHER

struct Document {
  std::string id;
  std::string text;
  Label label = Label::kOther;
  std::map<std::string, std::string> metadata;
};

struct Corpus {
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }
  std::size_t count(Label label) const;
};

// Reads the line-delimited JSON corpus format. Errors carry the 1-based line.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view contents);

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  // Built-in English list.
  static StopwordList english();
  // One token per line; blank lines and lines starting with '#' are ignored.
  static StopwordList from_file(const std::filesystem::path& path);

  bool contains(std::string_view token) const { return words_.contains(std::string(token)); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// Lowercases ASCII, splits on anything that is not an ASCII letter/digit
// (bytes >= 0x80 are kept as word characters), drops stopwords and tokens
// shorter than two bytes.
std::vector<std::string> tokenize(std::string_view text, const StopwordList& stopwords);
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  // Sorts and deduplicates.
  explicit Vocabulary(std::vector<std::string> terms);

  const std::vector<std::string>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  // -1 when absent.
  std::ptrdiff_t index_of(std::string_view term) const;
  const std::string& term(std::size_t column) const { return terms_.at(column); }

  // SHA-256 over the newline-joined ordered terms.
  std::string hash() const;

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct VocabularyOptions {
  std::size_t min_df = 2;
  double max_df_fraction = 0.9;
};

// Tokenized view of a corpus, computed once and shared by the steps below.
struct TokenizedCorpus {
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<std::vector<std::string>> tokens;
};

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const StopwordList& stopwords);

Vocabulary build_vocabulary(const TokenizedCorpus& corpus, const VocabularyOptions& options);
Vocabulary build_vocabulary(const Corpus& corpus, const VocabularyOptions& options,
                            const StopwordList& stopwords = StopwordList::english());

// Dense row-major tf/idf weights; rows follow corpus order.
struct DocTermMatrix {
  std::vector<std::string> row_ids;
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t rows() const { return row_ids.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * cols + col]; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
};

// weight = raw count * (ln((1+N)/(1+df)) + 1), then each non-empty row is
// L2-normalized. Out-of-vocabulary tokens are ignored.
DocTermMatrix tfidf_vectorize(const TokenizedCorpus& corpus, const Vocabulary& vocab);
DocTermMatrix tfidf_vectorize(const Corpus& corpus, const Vocabulary& vocab,
                              const StopwordList& stopwords = StopwordList::english());

std::vector<int> binary_labels(const TokenizedCorpus& corpus);  // THEME -> 1

}  // namespace canvas::text
