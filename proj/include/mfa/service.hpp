#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mfa/http.hpp"
#include "mfa/runner.hpp"

namespace mfa {

struct ServiceOptions {
  std::filesystem::path base_dir = ".";  // script/prompt files of uploaded definitions
  std::filesystem::path sink_dir = ".";
  std::optional<std::string> bearer_token;
  std::string cors_origin = "*";
  std::size_t step_budget = 64;
  std::shared_ptr<const ChatClient> chat;
  std::shared_ptr<const ComponentFactory> factory;
};

/// HTTP front end over the runner:
///   POST /automata                 .mfa text -> 201 {automaton_id, report} | 422
///   GET  /automata                 list
///   GET  /automata/{id}/graph      nodes, edges, triggers, attachments
///   POST /sessions                 {automaton_id, seed?} -> 201 handle | 404
///   GET  /sessions/{id}            handle plus archive contents
///   POST /sessions/{id}/message    {text} -> {displayed, handle} | 409 | 410
///   GET  /sessions/{id}/events     SSE: replay from seq 0 (or Last-Event-ID + 1), then live
///   GET  /sessions/{id}/transcript line-delimited JSON, same bytes as the CLI
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  struct Upload {
    int status = 0;  // 201 or 422
    nlohmann::json body;
  };
  /// Registers a definition under a fresh versioned id.
  Upload upload(std::string_view text, const std::optional<std::filesystem::path>& base_dir = std::nullopt);
  /// Uploads every *.mfa file in a directory (sorted); returns how many were
  /// accepted. Rejected files are reported on stderr.
  std::size_t load_directory(const std::filesystem::path& dir);

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port; throws IO when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();
  [[nodiscard]] int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mfa
