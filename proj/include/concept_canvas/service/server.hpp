#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "concept_canvas/pipeline/config.hpp"
#include "concept_canvas/pipeline/pipeline.hpp"

namespace httplib {
class Server;
class Request;
class Response;
}  // namespace httplib

namespace canvas::service {

inline constexpr const char* kTokenEnv = "CONCEPT_CANVAS_TOKEN";
inline constexpr int kThumbnailSide = 256;

struct ServerOptions {
  std::filesystem::path root = "runs";
  std::string host = "127.0.0.1";
  int port = 8700;
  std::string token;  // empty disables authentication
  bool open_reads = true;
  std::filesystem::path web_dir;  // static UI bundle; a placeholder page when empty
  pipeline::Config base_config = pipeline::Config::defaults();
  pipeline::ProviderFactory providers;
};

// Splits "host:port"; a bare port keeps the default host.
std::pair<std::string, int> parse_listen(const std::string& text);

// The OpenAPI-style description served at /api/spec.
nlohmann::json api_description();

class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds options.host; port 0 picks a free port. Returns the bound port.
  int bind();
  // Blocks serving requests until stop().
  void serve();
  void stop();
  // Waits for background stage workers to finish.
  void join_workers();

  pipeline::Pipeline& pipeline() { return pipeline_; }

 private:
  void routes();
  bool authorized(const httplib::Request& req, bool mutating) const;
  bool start_advance(const std::string& run_id, pipeline::AdvanceOptions options);
  // Gives a worker that is just finishing a short grace period; false if still busy.
  bool wait_idle(const std::string& run_id);

  ServerOptions options_;
  pipeline::Pipeline pipeline_;
  std::unique_ptr<httplib::Server> http_;
  std::mutex workers_mutex_;
  std::map<std::string, std::thread> workers_;
  std::map<std::string, bool> running_;
  std::atomic<bool> stopping_{false};
};

}  // namespace canvas::service
