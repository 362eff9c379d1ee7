#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace canvas::acquisition {

inline constexpr const char* kSearchKeyEnv = "CONCEPT_CANVAS_SEARCH_KEY";

struct SearchResult {
  std::string locator;
};

// Retryable failure (timeouts, 429, 5xx).
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejected credentials; aborts the whole harvest.
class AuthenticationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An image search backend. search() returns at most n results with no
// repeated locators; fetch() returns the encoded image bytes.
class SearchProvider {
 public:
  virtual ~SearchProvider() = default;

  virtual std::string name() const = 0;
  // Maximum requests per second across all threads; 0 means unlimited.
  virtual double rate_limit() const { return 0.0; }
  virtual std::vector<SearchResult> search(const std::string& term, std::size_t n) = 0;
  virtual std::vector<std::uint8_t> fetch(const SearchResult& result) = 0;
};

// Offline provider: <root>/<slug(query)>/*.{png,jpg,jpeg}, sorted by file name.
class LocalDirectoryProvider final : public SearchProvider {
 public:
  explicit LocalDirectoryProvider(std::filesystem::path root);

  std::string name() const override { return "local"; }
  std::vector<SearchResult> search(const std::string& term, std::size_t n) override;
  std::vector<std::uint8_t> fetch(const SearchResult& result) override;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct HttpProviderConfig {
  // Search endpoint; queried as <endpoint>?<query_param>=<term>&<count_param>=<n>.
  std::string endpoint;
  std::string query_param = "q";
  std::string count_param = "n";
  // JSON pointer to the result array and the URL field of each entry.
  std::string results_pointer = "/results";
  std::string url_field = "url";
  double rate_limit = 5.0;
  int timeout_seconds = 20;
  // Bearer credential; read from CONCEPT_CANVAS_SEARCH_KEY when empty.
  std::string api_key;
};

// Generic JSON-over-HTTP image search client.
class HttpSearchProvider final : public SearchProvider {
 public:
  explicit HttpSearchProvider(HttpProviderConfig config);

  std::string name() const override { return "http"; }
  double rate_limit() const override { return config_.rate_limit; }
  std::vector<SearchResult> search(const std::string& term, std::size_t n) override;
  std::vector<std::uint8_t> fetch(const SearchResult& result) override;

 private:
  std::vector<std::uint8_t> get(const std::string& url, bool with_auth);
  HttpProviderConfig config_;
};

// "local:<dir>" or "http:<endpoint>".
std::unique_ptr<SearchProvider> make_provider(const std::string& spec, const HttpProviderConfig& http_defaults = {});

// Spaces requests so that at most `per_second` start in any one-second window.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}
  void acquire();

 private:
  double per_second_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

struct RetryPolicy {
  int max_retries = 3;
  double base_delay_seconds = 1.0;
  double factor = 2.0;
  // Injected for tests; defaults to a real sleep.
  std::function<void(double seconds)> sleep;

  double delay(int attempt) const;  // attempt 0 -> base
};

// Calls fn, retrying TransientError with exponential backoff. Rethrows the
// last TransientError once retries are exhausted.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const TransientError&) {
      if (attempt >= policy.max_retries) throw;
      const double d = policy.delay(attempt);
      if (policy.sleep) {
        policy.sleep(d);
      } else {
        std::this_thread::sleep_for(std::chrono::duration<double>(d));
      }
    }
  }
}

}  // namespace canvas::acquisition
