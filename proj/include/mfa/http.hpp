#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfa/history.hpp"

namespace mfa {

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  double timeout_seconds = 30.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by a transport when no HTTP response was obtained at all
/// (connection refused, timeout, TLS failure).
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport. Stateless between calls, so one instance
/// can be shared by concurrent sessions.
std::shared_ptr<HttpTransport> make_http_transport();

struct RetryPolicy {
  int max_retries = 2;
  double initial_backoff_seconds = 0.5;
  double multiplier = 2.0;
  std::function<void(double)> sleep;  // defaults to std::this_thread::sleep_for
};

/// 408, 429 and 5xx are worth retrying; everything else is final.
bool is_transient_status(int status) noexcept;

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatPayload {
  std::vector<ChatMessage> messages;
  std::string model;
  double temperature = 0.7;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// System prompt (if any), then each archived pair as user/assistant in seq
/// order, then the new message as the final user turn.
ChatPayload build_chat_payload(const std::optional<std::string>& prompt,
                               const std::vector<ExchangePair>& history, const std::string& message);

struct ChatEndpoint {
  std::string url;
  // Environment variable holding the bearer token. Keys never live in
  // definition files.
  std::optional<std::string> api_key_env;
  double timeout_seconds = 30.0;
};

/// OpenAI-compatible chat-completions client with retry on transient failures.
class ChatClient {
 public:
  explicit ChatClient(std::shared_ptr<HttpTransport> transport, RetryPolicy retry = {});

  /// Returns the first choice's message content. Throws HTTP_ERROR (with the
  /// endpoint in the message) or EMPTY_COMPLETION.
  std::string complete(const ChatEndpoint& endpoint, const ChatPayload& payload) const;

 private:
  std::shared_ptr<HttpTransport> transport_;
  RetryPolicy retry_;
};

}  // namespace mfa
