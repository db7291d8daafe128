#include "mfa/backends.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mfa/csv.hpp"
#include "mfa/error.hpp"

namespace mfa {

std::string Backend::predict(const std::string& message) {
  std::string out = do_predict(message);
  if (out.empty()) throw Error(ErrorCode::EmptyCompletion, "state produced an empty output");
  return out;
}

void Backend::add_pair_if_attached(const std::string& input, const std::string& output) {
  if (history_ && can_write(history_->mode())) history_->add_pair(input, output);
}

std::vector<ExchangePair> Backend::readable_history() const {
  if (history_ && can_read(history_->mode())) return history_->read_pairs();
  return {};
}

std::string ScriptedBackend::do_predict(const std::string&) {
  if (next_ >= lines_.size())
    throw Error(ErrorCode::ScriptExhausted,
                "scripted dialer ran out of lines after " + std::to_string(lines_.size()));
  return lines_[next_++];
}

std::string TemplateBackend::do_predict(const std::string& message) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = pattern_.find("{msg}", pos);
    if (hit == std::string::npos) break;
    out.append(pattern_, pos, hit - pos);
    out += message;
    pos = hit + 5;
  }
  out.append(pattern_, pos, std::string::npos);
  return out;
}

HttpChatBackend::HttpChatBackend(std::shared_ptr<const ChatClient> client, ChatEndpoint endpoint,
                                 std::string model, double temperature,
                                 std::optional<std::string> prompt)
    : client_(std::move(client)),
      endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      temperature_(temperature),
      prompt_(std::move(prompt)) {}

ChatPayload HttpChatBackend::payload_for(const std::string& message) const {
  auto payload = build_chat_payload(prompt_, readable_history(), message);
  payload.model = model_;
  payload.temperature = temperature_;
  return payload;
}

std::string HttpChatBackend::do_predict(const std::string& message) {
  return client_->complete(endpoint_, payload_for(message));
}

// ---------------------------------------------------------------------------

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

WriterBackend::WriterBackend(std::filesystem::path sink, std::string field, std::string session_id,
                             std::optional<std::string> extract_pattern)
    : sink_(std::move(sink)), field_(std::move(field)), session_id_(std::move(session_id)) {
  if (extract_pattern) extract_.emplace(*extract_pattern, std::regex::ECMAScript);
}

std::string WriterBackend::extract(const std::string& message) const {
  if (!extract_) return message;
  std::smatch m;
  if (!std::regex_search(message, m, *extract_)) return message;
  return m.size() > 1 && m[1].matched ? m[1].str() : m[0].str();
}

std::string WriterBackend::do_predict(const std::string& message) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(sink_, ec) || std::filesystem::file_size(sink_, ec) == 0;
  if (sink_.has_parent_path()) std::filesystem::create_directories(sink_.parent_path(), ec);

  std::ofstream out(sink_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::SinkIo, "cannot open sink " + sink_.string());
  if (fresh) out << csv::format_row({"field", "value", "timestamp", "session_id"});
  out << csv::format_row({field_, extract(message), utc_timestamp(), session_id_});
  out.flush();
  if (!out) throw Error(ErrorCode::SinkIo, "cannot write sink " + sink_.string());
  return message;
}

std::vector<SinkRecord> read_sink(const std::filesystem::path& path) {
  auto rows = csv::parse(read_text_file(path));
  std::vector<SinkRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& r = rows[i];
    r.resize(4);
    out.push_back({r[0], r[1], r[2], r[3]});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> load_script(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::string unescaped;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == 'n') {
        unescaped.push_back('\n');
        ++i;
      } else {
        unescaped.push_back(line[i]);
      }
    }
    lines.push_back(std::move(unescaped));
  }
  return lines;
}

std::optional<std::string> resolve_prompt(const Params& params, const std::filesystem::path& base_dir) {
  if (auto it = params.find("prompt"); it != params.end()) return it->second;
  if (auto it = params.find("prompt_file"); it != params.end()) {
    std::string text = read_text_file(base_dir / it->second);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
  }
  return std::nullopt;
}

std::unique_ptr<Backend> make_backend(const StateNode& node, const BackendContext& context) {
  auto resolved = resolve_dialer_config(node);
  if (!resolved.config) {
    std::string why = resolved.problems.empty() ? "invalid configuration" : resolved.problems.front();
    throw Error(ErrorCode::BackendConfig, "state " + node.id.str() + ": " + why);
  }
  const DialerConfig& cfg = *resolved.config;

  switch (cfg.kind) {
    case BackendKind::Scripted:
      return std::make_unique<ScriptedBackend>(load_script(context.base_dir / *cfg.get("script_file")));
    case BackendKind::Template:
      return std::make_unique<TemplateBackend>(*cfg.get("template"));
    case BackendKind::HttpChat: {
      if (!context.chat)
        throw Error(ErrorCode::BackendConfig, "state " + node.id.str() + ": no chat client available");
      ChatEndpoint ep{*cfg.get("endpoint"), cfg.get("api_key_env"), cfg.timeout_seconds()};
      return std::make_unique<HttpChatBackend>(context.chat, std::move(ep), *cfg.get("model"),
                                               cfg.temperature(), resolve_prompt(cfg.params, context.base_dir));
    }
    case BackendKind::Writer: {
      std::filesystem::path sink = *cfg.get("sink");
      if (sink.is_relative()) sink = context.sink_dir / sink;
      return std::make_unique<WriterBackend>(std::move(sink), cfg.get("field").value_or(node.id.str()),
                                             context.session_id, cfg.get("pattern"));
    }
  }
  throw Error(ErrorCode::BackendConfig, "state " + node.id.str() + ": unknown backend kind");
}

}  // namespace mfa
