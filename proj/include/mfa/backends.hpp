#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mfa/automaton.hpp"
#include "mfa/backend_config.hpp"
#include "mfa/history.hpp"
#include "mfa/http.hpp"

namespace mfa {

/// The state function q: message -> non-empty message, plus the optional
/// history binding of the node it serves.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Runs the state function. The result is never empty; an empty output
  /// raises EMPTY_COMPLETION.
  std::string predict(const std::string& message);

  /// Archives the exchange when a writable attachment exists; no effect
  /// otherwise (including read-only attachments).
  void add_pair_if_attached(const std::string& input, const std::string& output);

  void attach(HistoryAttachment* attachment) noexcept { history_ = attachment; }
  [[nodiscard]] HistoryAttachment* attachment() const noexcept { return history_; }

 protected:
  virtual std::string do_predict(const std::string& message) = 0;
  /// Snapshot of the attached history when readable, else empty.
  [[nodiscard]] std::vector<ExchangePair> readable_history() const;

 private:
  HistoryAttachment* history_ = nullptr;
};

class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> lines) : lines_(std::move(lines)) {}
  [[nodiscard]] std::size_t remaining() const noexcept { return lines_.size() - next_; }

 protected:
  std::string do_predict(const std::string& message) override;

 private:
  std::vector<std::string> lines_;
  std::size_t next_ = 0;
};

/// Substitutes the incoming message for every "{msg}" in the pattern.
class TemplateBackend final : public Backend {
 public:
  explicit TemplateBackend(std::string pattern) : pattern_(std::move(pattern)) {}

 protected:
  std::string do_predict(const std::string& message) override;

 private:
  std::string pattern_;
};

class HttpChatBackend final : public Backend {
 public:
  HttpChatBackend(std::shared_ptr<const ChatClient> client, ChatEndpoint endpoint, std::string model,
                  double temperature, std::optional<std::string> prompt);

  /// Payload that predict() would send for this message right now.
  [[nodiscard]] ChatPayload payload_for(const std::string& message) const;

 protected:
  std::string do_predict(const std::string& message) override;

 private:
  std::shared_ptr<const ChatClient> client_;
  ChatEndpoint endpoint_;
  std::string model_;
  double temperature_;
  std::optional<std::string> prompt_;
};

/// Appends (field, value, timestamp, session_id) to a CSV sink and passes the
/// message through unchanged. With an extraction pattern the stored value is
/// the first capture group (or whole match) instead of the full message.
class WriterBackend final : public Backend {
 public:
  WriterBackend(std::filesystem::path sink, std::string field, std::string session_id,
                std::optional<std::string> extract_pattern = std::nullopt);

  [[nodiscard]] const std::filesystem::path& sink() const noexcept { return sink_; }
  [[nodiscard]] std::string extract(const std::string& message) const;

 protected:
  std::string do_predict(const std::string& message) override;

 private:
  std::filesystem::path sink_;
  std::string field_;
  std::string session_id_;
  std::optional<std::regex> extract_;
};

struct SinkRecord {
  std::string field;
  std::string value;
  std::string timestamp;
  std::string session_id;
};

/// Reads a writer sink back (header row skipped).
std::vector<SinkRecord> read_sink(const std::filesystem::path& path);

/// What a backend or trigger factory needs besides the definition itself.
struct BackendContext {
  std::filesystem::path base_dir = ".";  // resolves prompt_file / script_file
  std::filesystem::path sink_dir = ".";  // resolves relative writer sinks
  std::string session_id = "session";
  std::shared_ptr<const ChatClient> chat;  // required only for HTTP kinds
};

/// Reads a UTF-8 text file; IO on failure.
std::string read_text_file(const std::filesystem::path& path);

/// Script files: one response per line; blank lines and lines starting with
/// '#' are skipped; "\n" inside a line becomes a newline.
std::vector<std::string> load_script(const std::filesystem::path& path);

/// Inline prompt or the contents of prompt_file, if either is configured.
std::optional<std::string> resolve_prompt(const Params& params, const std::filesystem::path& base_dir);

/// Builds the backend for a machine state. Throws BACKEND_CONFIG / IO.
std::unique_ptr<Backend> make_backend(const StateNode& node, const BackendContext& context);

}  // namespace mfa
