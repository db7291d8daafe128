#include "mfa/http.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "mfa/error.hpp"

namespace mfa {

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos)
      throw TransportFailure("malformed URL '" + request.url + "'");
    auto path_start = request.url.find('/', scheme_end + 3);
    std::string origin = request.url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(origin);
    if (!client.is_valid()) throw TransportFailure("unsupported endpoint '" + origin + "'");
    const auto secs = static_cast<time_t>(request.timeout_seconds);
    const auto usecs = static_cast<time_t>((request.timeout_seconds - secs) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto result = client.Post(path, headers, request.body, "application/json");
    if (!result) throw TransportFailure(httplib::to_string(result.error()));
    return HttpResponse{result->status, result->body};
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

bool is_transient_status(int status) noexcept {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

nlohmann::json ChatPayload::to_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", model}, {"temperature", temperature}, {"messages", std::move(msgs)}};
}

ChatPayload build_chat_payload(const std::optional<std::string>& prompt,
                               const std::vector<ExchangePair>& history, const std::string& message) {
  ChatPayload payload;
  payload.messages.reserve(2 * history.size() + 2);
  if (prompt) payload.messages.push_back({"system", *prompt});
  for (const auto& pair : history) {
    payload.messages.push_back({"user", pair.input});
    payload.messages.push_back({"assistant", pair.output});
  }
  payload.messages.push_back({"user", message});
  return payload;
}

ChatClient::ChatClient(std::shared_ptr<HttpTransport> transport, RetryPolicy retry)
    : transport_(std::move(transport)), retry_(std::move(retry)) {
  if (!retry_.sleep)
    retry_.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

std::string ChatClient::complete(const ChatEndpoint& endpoint, const ChatPayload& payload) const {
  HttpRequest request;
  request.url = endpoint.url;
  request.body = payload.to_json().dump();
  request.timeout_seconds = endpoint.timeout_seconds;
  request.headers.emplace_back("Content-Type", "application/json");

  std::string key_var = endpoint.api_key_env.value_or("OPENAI_API_KEY");
  if (const char* key = std::getenv(key_var.c_str()); key && *key) {
    request.headers.emplace_back("Authorization", std::string("Bearer ") + key);
  } else if (endpoint.api_key_env) {
    throw Error(ErrorCode::HttpError,
                endpoint.url + ": environment variable " + key_var + " is not set");
  }

  std::string last_problem;
  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0)
      retry_.sleep(retry_.initial_backoff_seconds * std::pow(retry_.multiplier, attempt - 1));

    HttpResponse response;
    try {
      response = transport_->post(request);
    } catch (const TransportFailure& e) {
      last_problem = e.what();
      continue;
    }

    if (response.status < 200 || response.status >= 300) {
      last_problem = "status " + std::to_string(response.status);
      if (is_transient_status(response.status)) continue;
      throw Error(ErrorCode::HttpError, endpoint.url + ": " + last_problem);
    }

    std::string content;
    try {
      auto body = nlohmann::json::parse(response.body);
      const auto& msg = body.at("choices").at(0).at("message").at("content");
      content = msg.is_null() ? std::string() : msg.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::HttpError, endpoint.url + ": malformed completion (" + e.what() + ")");
    }
    if (content.empty())
      throw Error(ErrorCode::EmptyCompletion, endpoint.url + ": model returned an empty completion");
    return content;
  }
  throw Error(ErrorCode::HttpError, endpoint.url + ": " + last_problem + " after " +
                                        std::to_string(retry_.max_retries + 1) + " attempts");
}

}  // namespace mfa
