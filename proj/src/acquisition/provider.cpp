#include "concept_canvas/acquisition/provider.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"

namespace canvas::acquisition {
namespace fs = std::filesystem;

LocalDirectoryProvider::LocalDirectoryProvider(fs::path root) : root_(std::move(root)) {
  if (!fs::is_directory(root_)) {
    fail(ErrorKind::kNotFound, "local image provider root does not exist: " + root_.string());
  }
}

std::vector<SearchResult> LocalDirectoryProvider::search(const std::string& term, std::size_t n) {
  const fs::path dir = root_ / slugify(term);
  std::vector<std::string> files;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() > n) files.resize(n);
  std::vector<SearchResult> out;
  for (auto& f : files) out.push_back({std::move(f)});
  return out;
}

std::vector<std::uint8_t> LocalDirectoryProvider::fetch(const SearchResult& result) { return read_bytes(result.locator); }

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path + query
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::kInvalidArgument, "not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpSearchProvider::HttpSearchProvider(HttpProviderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) fail(ErrorKind::kInvalidArgument, "http provider needs an endpoint");
  if (config_.api_key.empty()) {
    if (const char* key = std::getenv(kSearchKeyEnv)) config_.api_key = key;
  }
}

std::vector<std::uint8_t> HttpSearchProvider::get(const std::string& url, bool with_auth) {
  const auto parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  client.set_follow_location(true);
  httplib::Headers headers;
  if (with_auth && !config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Get(parts.path, headers);
  if (!res) throw TransientError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw AuthenticationError("search provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + url);
  }
  if (res->status != 200) fail(ErrorKind::kDataError, "HTTP " + std::to_string(res->status) + " from " + url);
  return {res->body.begin(), res->body.end()};
}

std::vector<SearchResult> HttpSearchProvider::search(const std::string& term, std::size_t n) {
  const char sep = config_.endpoint.find('?') == std::string::npos ? '?' : '&';
  const std::string url = config_.endpoint + sep + config_.query_param + "=" +
                          httplib::detail::encode_query_param(term) + "&" + config_.count_param + "=" +
                          std::to_string(n);
  const auto body = get(url, true);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kDataError, std::string("search response is not JSON: ") + e.what());
  }
  const nlohmann::json::json_pointer ptr(config_.results_pointer);
  if (!doc.contains(ptr) || !doc.at(ptr).is_array()) {
    fail(ErrorKind::kDataError, "search response has no array at " + config_.results_pointer);
  }
  std::vector<SearchResult> out;
  std::vector<std::string> seen;
  for (const auto& item : doc.at(ptr)) {
    if (out.size() >= n) break;
    std::string locator;
    if (item.is_string()) {
      locator = item.get<std::string>();
    } else if (item.is_object() && item.contains(config_.url_field) && item[config_.url_field].is_string()) {
      locator = item[config_.url_field].get<std::string>();
    } else {
      continue;
    }
    if (std::find(seen.begin(), seen.end(), locator) != seen.end()) continue;
    seen.push_back(locator);
    out.push_back({std::move(locator)});
  }
  return out;
}

std::vector<std::uint8_t> HttpSearchProvider::fetch(const SearchResult& result) {
  std::string url = result.locator;
  if (url.rfind("/", 0) == 0) url = split_url(config_.endpoint).origin + url;
  return get(url, false);
}

std::unique_ptr<SearchProvider> make_provider(const std::string& spec, const HttpProviderConfig& http_defaults) {
  if (spec.rfind("local:", 0) == 0) return std::make_unique<LocalDirectoryProvider>(spec.substr(6));
  if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
    HttpProviderConfig config = http_defaults;
    config.endpoint = spec.rfind("http:", 0) == 0 && spec.rfind("http://", 0) != 0 ? spec.substr(5) : spec;
    return std::make_unique<HttpSearchProvider>(std::move(config));
  }
  fail(ErrorKind::kInvalidArgument, "unknown provider spec '" + spec + "' (expected local:<dir> or http:<url>)");
}

void RateLimiter::acquire() {
  if (per_second_ <= 0.0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(1.0 / per_second_));
  }
  std::this_thread::sleep_until(slot);
}

double RetryPolicy::delay(int attempt) const { return base_delay_seconds * std::pow(factor, attempt); }

}  // namespace canvas::acquisition
