#include "mfa/triggers.hpp"

#include <algorithm>
#include <cctype>

#include "mfa/error.hpp"

namespace mfa {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

}  // namespace

Trigger::Trigger(TriggerId id, int default_priority) : id_(std::move(id)), priority_(1) {
  set_priority(default_priority);
}

void Trigger::set_priority(int p) {
  if (p < 1)
    throw Error(ErrorCode::BadPriority,
                "trigger " + id_.str() + ": priority must be >= 1 (got " + std::to_string(p) + ")");
  priority_ = p;
}

void Trigger::attach(const HistoryAttachment* attachment) {
  if (attachment && attachment->mode() != AccessMode::Read)
    throw Error(ErrorCode::TriggerWrite, "trigger " + id_.str() + " may only read its history");
  history_ = attachment;
}

std::vector<ExchangePair> Trigger::readable_history() const {
  return history_ ? history_->read_pairs() : std::vector<ExchangePair>{};
}

// ---------------------------------------------------------------------------

KeywordTrigger::KeywordTrigger(TriggerId id, int default_priority, std::vector<std::string> keywords,
                               bool case_sensitive)
    : Trigger(std::move(id), default_priority), case_sensitive_(case_sensitive) {
  for (auto& k : keywords) {
    if (k.empty()) continue;
    keywords_.push_back(case_sensitive_ ? std::move(k) : ascii_lower(k));
  }
}

bool KeywordTrigger::fire(const StateId&, std::string_view message) {
  const std::string text = case_sensitive_ ? std::string(message) : ascii_lower(message);
  for (const auto& k : keywords_) {
    for (auto pos = text.find(k); pos != std::string::npos; pos = text.find(k, pos + 1)) {
      const bool left = pos == 0 || !is_word_byte(static_cast<unsigned char>(text[pos - 1]));
      const auto end = pos + k.size();
      const bool right = end == text.size() || !is_word_byte(static_cast<unsigned char>(text[end]));
      if (left && right) return true;
    }
  }
  return false;
}

PatternTrigger::PatternTrigger(TriggerId id, int default_priority, const std::string& pattern,
                               bool case_sensitive)
    : Trigger(std::move(id), default_priority),
      pattern_(pattern, case_sensitive ? std::regex::ECMAScript
                                       : std::regex::ECMAScript | std::regex::icase) {}

bool PatternTrigger::fire(const StateId&, std::string_view message) {
  return std::regex_search(message.begin(), message.end(), pattern_);
}

LlmClassifierTrigger::LlmClassifierTrigger(TriggerId id, int default_priority,
                                           std::shared_ptr<const ChatClient> client,
                                           ChatEndpoint endpoint, std::string model,
                                           std::string prompt, double temperature)
    : Trigger(std::move(id), default_priority),
      client_(std::move(client)),
      endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      prompt_(std::move(prompt)),
      temperature_(temperature) {}

ChatPayload LlmClassifierTrigger::payload_for(std::string_view message) const {
  auto payload = build_chat_payload(prompt_, readable_history(), std::string(message));
  payload.model = model_;
  payload.temperature = temperature_;
  return payload;
}

bool LlmClassifierTrigger::fire(const StateId&, std::string_view message) {
  return parse_classifier_output(client_->complete(endpoint_, payload_for(message)));
}

bool parse_classifier_output(std::string_view completion) {
  const auto text = trim(completion);
  auto boundary_after = [&](std::size_t n) {
    return text.size() == n || !std::isalnum(static_cast<unsigned char>(text[n]));
  };
  if (!text.empty() && (text.front() == '1' || text.front() == '0') && boundary_after(1))
    return text.front() == '1';
  const std::string lower = ascii_lower(text.substr(0, 3));
  if (lower.rfind("yes", 0) == 0 && boundary_after(3)) return true;
  if (lower.rfind("no", 0) == 0 && boundary_after(2)) return false;
  throw Error(ErrorCode::ClassifierParse,
              "cannot read a bit from completion '" + std::string(text.substr(0, 40)) + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = trim(text.substr(start, comma - start));
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

std::unique_ptr<Trigger> make_trigger(const TriggerDef& def, const BackendContext& context) {
  auto problems = check_trigger_config(def);
  if (!problems.empty())
    throw Error(ErrorCode::TriggerConfig, "trigger " + def.id.str() + ": " + problems.front());
  const auto& p = def.params;
  auto case_sensitive = [&](bool fallback) {
    auto it = p.find("case");
    return it == p.end() ? fallback : it->second == "sensitive";
  };

  switch (def.kind) {
    case TriggerKind::Always:
      return std::make_unique<AlwaysTrigger>(def.id, def.default_priority);
    case TriggerKind::Keyword:
      return std::make_unique<KeywordTrigger>(def.id, def.default_priority,
                                              split_list(p.at("keywords")), case_sensitive(false));
    case TriggerKind::Pattern:
      return std::make_unique<PatternTrigger>(def.id, def.default_priority, p.at("pattern"),
                                              case_sensitive(true));
    case TriggerKind::LlmClassifier: {
      if (!context.chat)
        throw Error(ErrorCode::TriggerConfig, "trigger " + def.id.str() + ": no chat client available");
      DialerConfig http{BackendKind::HttpChat, p};
      double temperature = LlmClassifierTrigger::kDefaultTemperature;
      if (p.count("temperature")) temperature = http.temperature();
      ChatEndpoint ep{p.at("endpoint"), http.get("api_key_env"), http.timeout_seconds()};
      return std::make_unique<LlmClassifierTrigger>(def.id, def.default_priority, context.chat,
                                                    std::move(ep), p.at("model"),
                                                    resolve_prompt(p, context.base_dir).value_or(""),
                                                    temperature);
    }
  }
  throw Error(ErrorCode::TriggerConfig, "trigger " + def.id.str() + ": unknown kind");
}

}  // namespace mfa
