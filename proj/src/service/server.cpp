#include "concept_canvas/service/server.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/common/log.hpp"
#include "concept_canvas/image/image.hpp"

namespace canvas::service {
namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::Stage;

namespace {

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Concept Canvas</title></head>
<body><h1>Concept Canvas</h1>
<p>The studio UI bundle is not installed. The API description is at <a href="/api/spec">/api/spec</a>.</p>
</body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message, const json& details) {
  send_json(res, http_status(kind), {{"code", to_string(kind)}, {"message", message}, {"details", details}});
}

std::string content_type(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".json") return "application/json";
  if (ext == ".jsonl") return "application/x-ndjson";
  if (ext == ".csv") return "text/csv";
  if (ext == ".txt") return "text/plain";
  return "application/octet-stream";
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return json::object();
    fail(ErrorKind::kInvalidArgument, "request body is required");
  }
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kInvalidArgument, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!body.is_object()) fail(ErrorKind::kInvalidArgument, "request body must be a JSON object");
  return body;
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kInvalidArgument, std::string("query parameter '") + name + "' must be a non-negative integer",
       {{"field", name}});
}

bool constant_time_equal(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

image::Image thumbnail(const image::Image& img) {
  const double scale = static_cast<double>(kThumbnailSide) / std::max(img.width, img.height);
  const int w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  return image::resize_bilinear(img, w, h);
}

}  // namespace

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  std::string host = "127.0.0.1";
  std::string port = text;
  if (colon != std::string::npos) {
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used == port.size() && p >= 0 && p <= 65535 && !host.empty()) return {host, p};
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kInvalidArgument, "listen address must be host:port, got '" + text + "'");
}

json api_description() {
  auto op = [](const std::string& summary, const std::vector<int>& codes, bool auth) {
    json responses = json::object();
    for (int c : codes) responses[std::to_string(c)] = {{"description", httplib::status_message(c)}};
    json o = {{"summary", summary}, {"responses", responses}};
    if (auth) o["security"] = json::array({{{"bearer", json::array()}}});
    return o;
  };
  json paths = {
      {"/runs",
       {{"get", op("List run ids", {200}, false)},
        {"post", op("Create a run. Body: {theme, corpus, mode?, run_id?, toy?, config?}", {201, 400, 401, 404, 409},
                    true)}}},
      {"/runs/{id}", {{"get", op("Run manifest", {200, 404}, false)}}},
      {"/runs/{id}/gates/current",
       {{"get", op("Pending gate with paginated candidates. Query: page, size", {200, 404, 409}, false)}}},
      {"/runs/{id}/gates/{gate}/selection",
       {{"post", op("Resolve a gate. Body: {ids:[...]} or {approve:true} or {positives,negatives}",
                    {200, 400, 401, 404, 409, 422}, true)}}},
      {"/runs/{id}/advance",
       {{"post", op("Start the next stage in the background. Body: {stages?, auto_gates?, until?}",
                    {200, 202, 401, 404, 409}, true)}}},
      {"/runs/{id}/retry", {{"post", op("Return a FAILED run to its failed stage", {200, 401, 404, 409}, true)}}},
      {"/runs/{id}/events",
       {{"get", op("Events with seq > after_seq, ascending. Query: after_seq, limit, wait (seconds)", {200, 404},
                   false)}}},
      {"/runs/{id}/artifacts/{path}", {{"get", op("Artifact bytes listed in the manifest", {200, 404}, false)}}},
      {"/runs/{id}/thumbnails/{image_id}", {{"get", op("256px PNG thumbnail", {200, 404}, false)}}},
      {"/api/ui-config", {{"get", op("UI bootstrap configuration", {200}, false)}}},
      {"/api/spec", {{"get", op("This document", {200}, false)}}},
  };
  return {{"openapi", "3.0.3"},
          {"info", {{"title", "Concept Canvas API"}, {"version", "0.1.0"}}},
          {"components",
           {{"securitySchemes", {{"bearer", {{"type", "http"}, {"scheme", "bearer"}}}}},
            {"schemas",
             {{"Error",
               {{"type", "object"},
                {"required", {"code", "message", "details"}},
                {"properties",
                 {{"code", {{"type", "string"}}},
                  {"message", {{"type", "string"}}},
                  {"details", {{"type", "object"}}}}}}}}}}},
          {"paths", paths}};
}

Server::Server(ServerOptions options)
    : options_(std::move(options)),
      pipeline_(options_.root, options_.providers),
      http_(std::make_unique<httplib::Server>()) {
  routes();
}

Server::~Server() {
  stop();
  join_workers();
}

bool Server::authorized(const httplib::Request& req, bool mutating) const {
  if (options_.token.empty()) return true;
  if (!mutating && options_.open_reads) return true;
  const auto header = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  return header.rfind(prefix, 0) == 0 && constant_time_equal(header.substr(prefix.size()), options_.token);
}

bool Server::start_advance(const std::string& run_id, pipeline::AdvanceOptions options) {
  std::lock_guard lock(workers_mutex_);
  if (running_[run_id]) return false;
  if (auto it = workers_.find(run_id); it != workers_.end()) {
    if (it->second.joinable()) it->second.join();
    workers_.erase(it);
  }
  running_[run_id] = true;
  options.should_stop = [this] { return stopping_.load(); };
  workers_[run_id] = std::thread([this, run_id, options] {
    try {
      const auto r = pipeline_.advance(run_id, options);
      log::info("run " + run_id + ": advance " + std::string(pipeline::to_string(r.status)));
    } catch (const std::exception& e) {
      log::error("run " + run_id + ": advance rejected: " + e.what());
      try {
        pipeline_.events(run_id).append(pipeline_.resume(run_id).stage, "advance_rejected", {{"message", e.what()}});
      } catch (const std::exception&) {
      }
    }
    std::lock_guard done(workers_mutex_);
    running_[run_id] = false;
  });
  return true;
}

bool Server::wait_idle(const std::string& run_id) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  while (true) {
    {
      std::lock_guard lock(workers_mutex_);
      if (!running_[run_id]) return true;
    }
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void Server::routes() {
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  auto guarded = [this](bool mutating, Handler fn) {
    return [this, mutating, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        if (!authorized(req, mutating)) {
          send_error(res, ErrorKind::kUnauthorized, "missing or invalid bearer token", json::object());
          return;
        }
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.kind(), e.what(), e.details());
      } catch (const json::exception& e) {
        send_error(res, ErrorKind::kInvalidArgument, e.what(), json::object());
      } catch (const std::exception& e) {
        send_error(res, ErrorKind::kInternal, e.what(), json::object());
      }
    };
  };

  auto& http = *http_;
  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const auto kind = res.status == 405 ? ErrorKind::kInvalidArgument : ErrorKind::kNotFound;
      res.set_content(json({{"code", to_string(kind)},
                            {"message", httplib::status_message(res.status)},
                            {"details", json::object()}})
                          .dump(),
                      "application/json");
    }
  });

  if (!options_.web_dir.empty() && fs::is_directory(options_.web_dir)) {
    http.set_mount_point("/", options_.web_dir.string());
  }
  http.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholderPage, "text/html"); });
  http.Get("/api/spec", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, api_description()); });
  http.Get("/api/ui-config", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              {{"api_base", ""},
               {"token_required", !options_.token.empty()},
               {"open_reads", options_.open_reads},
               {"thumbnail_side", kThumbnailSide},
               {"event_poll_seconds", 2}});
  });

  http.Get("/runs", guarded(false, [this](const httplib::Request&, httplib::Response& res) {
             json runs = json::array();
             for (const auto& id : pipeline_.list_runs()) {
               try {
                 const auto run = pipeline_.resume(id);
                 runs.push_back({{"run_id", id}, {"theme", run.theme}, {"stage", pipeline::to_string(run.stage)}});
               } catch (const Error&) {
                 runs.push_back({{"run_id", id}, {"stage", nullptr}});
               }
             }
             send_json(res, 200, {{"runs", runs}});
           }));

  http.Post("/runs", guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
              const auto body = parse_body(req, false);
              auto field_string = [&](const char* name, bool required) -> std::string {
                if (!body.contains(name)) {
                  if (required) fail(ErrorKind::kInvalidArgument, std::string("'") + name + "' is required", {{"field", name}});
                  return {};
                }
                if (!body.at(name).is_string()) {
                  fail(ErrorKind::kInvalidArgument, std::string("'") + name + "' must be a string", {{"field", name}});
                }
                return body.at(name).get<std::string>();
              };
              pipeline::CreateRequest request;
              request.theme = field_string("theme", true);
              if (request.theme.empty()) fail(ErrorKind::kInvalidArgument, "'theme' must not be empty", {{"field", "theme"}});
              request.corpus_path = field_string("corpus", true);
              request.run_id = field_string("run_id", false);
              if (body.contains("mode")) {
                try {
                  request.mode = pipeline::parse_mode(field_string("mode", false));
                } catch (const Error& e) {
                  fail(ErrorKind::kInvalidArgument, e.what(), {{"field", "mode"}});
                }
              }
              request.config = options_.base_config;
              if (body.value("toy", false)) request.config.apply_toy();
              if (body.contains("config")) request.config.merge(body.at("config"));
              const auto run = pipeline_.create_run(request);
              send_json(res, 201,
                        {{"run_id", run.run_id}, {"stage", pipeline::to_string(run.stage)},
                         {"mode", pipeline::to_string(run.mode)}});
            }));

  http.Get(R"(/runs/([^/]+))", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             pipeline_.resume(id);  // NotFound and corruption checks
             res.status = 200;
             res.set_content(read_text(pipeline_.run_dir(id) / "manifest.json"), "application/json");
           }));

  http.Get(R"(/runs/([^/]+)/gates/current)", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             const auto view = pipeline_.current_gate(id);
             auto body = pipeline::to_json(view, query_size(req, "page", 1), query_size(req, "size", 0));
             if (view.gate != Stage::kTermReview) {
               for (auto& item : body["items"]) {
                 const auto image_id = item.at("id").get<std::string>();
                 item["thumbnail_url"] = "/runs/" + id + "/thumbnails/" + image_id;
                 if (item.contains("file")) item["image_url"] = "/runs/" + id + "/artifacts/" + item.at("file").get<std::string>();
               }
             }
             body["run_id"] = id;
             send_json(res, 200, body);
           }));

  http.Post(R"(/runs/([^/]+)/gates/([^/]+)/selection)",
            guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              const Stage gate = pipeline::parse_stage(std::string(req.matches[2]));
              auto selection = parse_body(req, false);
              std::string actor = req.get_header_value("X-Actor");
              if (selection.contains("actor")) {
                if (selection.at("actor").is_string()) actor = selection.at("actor").get<std::string>();
                selection.erase("actor");
              }
              wait_idle(id);
              const auto run = pipeline_.resolve_gate(id, gate, selection, actor.empty() ? "api" : actor);
              if (run.config.as<bool>("gates.auto_advance") && run.stage != Stage::kDone) {
                pipeline::AdvanceOptions options;
                options.max_stages = 0;
                options.actor = "api";
                start_advance(id, options);
              }
              res.status = 200;
              res.set_content(read_text(pipeline_.run_dir(id) / "manifest.json"), "application/json");
            }));

  http.Post(R"(/runs/([^/]+)/advance)", guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              const auto body = parse_body(req, true);
              if (!wait_idle(id)) fail(ErrorKind::kConflict, "a stage is already running for this run");
              const auto run = pipeline_.resume(id);
              pipeline::AdvanceOptions options;
              options.max_stages = body.value("stages", 1);
              options.auto_gates = body.value("auto_gates", false);
              options.actor = "api";
              if (body.contains("until")) options.until = pipeline::parse_stage(body.at("until").get<std::string>());
              if (run.stage == Stage::kDone) fail(ErrorKind::kConflict, "run is DONE");
              if (run.stage == Stage::kFailed) fail(ErrorKind::kConflict, "run FAILED; POST /runs/{id}/retry first");
              const bool auto_gate = options.auto_gates || (run.stage == Stage::kTermReview &&
                                                            run.config.as<std::string>("gates.term_review") == "auto");
              if (pipeline::is_gate(run.stage) && !auto_gate) {
                send_json(res, 200,
                          {{"run_id", id}, {"stage", pipeline::to_string(run.stage)}, {"status", "blocked"},
                           {"message", "awaiting decision at " + std::string(pipeline::to_string(run.stage))}});
                return;
              }
              { pipeline::RunLock probe(pipeline_.run_dir(id)); }
              if (!start_advance(id, options)) fail(ErrorKind::kConflict, "a stage is already running for this run");
              send_json(res, 202, {{"run_id", id}, {"stage", pipeline::to_string(run.stage)}, {"status", "started"}});
            }));

  http.Post(R"(/runs/([^/]+)/retry)", guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              pipeline_.retry(id);
              res.status = 200;
              res.set_content(read_text(pipeline_.run_dir(id) / "manifest.json"), "application/json");
            }));

  http.Get(R"(/runs/([^/]+)/events)", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             pipeline_.resume(id);
             const auto after = static_cast<std::int64_t>(query_size(req, "after_seq", 0));
             const auto limit = query_size(req, "limit", 0);
             const double wait = req.has_param("wait") ? std::clamp(std::stod(req.get_param_value("wait")), 0.0, 30.0) : 0.0;
             const auto log = pipeline_.events(id);
             auto events = log.read(after, limit);
             const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait);
             while (events.empty() && !stopping_ && std::chrono::steady_clock::now() < deadline) {
               std::this_thread::sleep_for(std::chrono::milliseconds(100));
               events = log.read(after, limit);
             }
             json list = json::array();
             for (const auto& e : events) list.push_back(e);
             send_json(res, 200, {{"run_id", id}, {"events", list}, {"last_seq", events.empty() ? after : events.back().seq}});
           }));

  http.Get(R"(/runs/([^/]+)/artifacts/(.+))", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             std::string path = req.matches[2];
             if (path == "final.png") path = "final/final.png";
             if (path == "provenance.json") path = "final/provenance.json";
             const auto run = pipeline_.resume(id);
             for (const auto& [stage, list] : run.artifacts) {
               for (const auto& a : list) {
                 if (a.path != path) continue;
                 const fs::path file = pipeline_.run_dir(id) / a.path;
                 const auto bytes = read_bytes(file);
                 res.status = 200;
                 res.set_content(std::string(bytes.begin(), bytes.end()), content_type(file));
                 return;
               }
             }
             fail(ErrorKind::kNotFound, "artifact '" + path + "' not found in run " + id, {{"artifact", path}});
           }));

  http.Get(R"(/runs/([^/]+)/thumbnails/([^/]+))", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             const std::string image_id = req.matches[2];
             pipeline_.resume(id);
             const auto source = pipeline_.find_image(id, image_id);
             if (!source) fail(ErrorKind::kNotFound, "image '" + image_id + "' not found in run " + id, {{"id", image_id}});
             const fs::path cache = options_.root / ".thumbnails" /
                                    (sha256_file(*source).substr(0, 32) + "-" + std::to_string(kThumbnailSide) + ".png");
             if (!fs::exists(cache)) image::write_png(cache, thumbnail(image::read_image(*source)));
             const auto bytes = read_bytes(cache);
             res.status = 200;
             res.set_header("Cache-Control", "public, max-age=31536000, immutable");
             res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
           }));
}

int Server::bind() {
  const int port = options_.port == 0 ? http_->bind_to_any_port(options_.host)
                                      : (http_->bind_to_port(options_.host, options_.port) ? options_.port : -1);
  if (port < 0) {
    fail(ErrorKind::kInvalidArgument,
         "cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
  return port;
}

void Server::serve() { http_->listen_after_bind(); }

void Server::stop() {
  stopping_ = true;
  if (http_) http_->stop();
}

void Server::join_workers() {
  std::map<std::string, std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    workers.swap(workers_);
  }
  for (auto& [id, t] : workers) {
    if (t.joinable()) t.join();
  }
}

}  // namespace canvas::service
