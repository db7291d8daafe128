#include "mfa/backend_config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <regex>

namespace mfa {

std::string_view to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Template: return "template";
    case BackendKind::HttpChat: return "http";
    case BackendKind::Writer: return "writer";
  }
  return "?";
}

namespace {

constexpr std::array kStateKeys = {"prompt",   "prompt_file", "display",     "history", "script_file",
                                   "template", "endpoint",    "model",       "temperature",
                                   "api_key_env", "timeout",  "sink",        "field",   "pattern"};
constexpr std::array kTriggerKeys = {"prompt",  "prompt_file", "history",     "keywords",
                                     "case",    "pattern",     "endpoint",    "model",
                                     "temperature", "api_key_env", "timeout", "priority"};

std::optional<double> to_number(const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

bool valid_regex(const std::string& pattern) {
  try {
    std::regex re(pattern, std::regex::ECMAScript);
    return true;
  } catch (const std::regex_error&) {
    return false;
  }
}

void check_http(const Params& p, std::vector<std::string>& problems, double max_temperature) {
  if (!p.count("endpoint")) problems.emplace_back("endpoint is required");
  if (!p.count("model")) problems.emplace_back("model is required");
  if (auto it = p.find("temperature"); it != p.end()) {
    auto t = to_number(it->second);
    if (!t || *t < 0.0 || *t > max_temperature)
      problems.emplace_back("temperature must be a number in [0, 2]");
  }
  if (auto it = p.find("timeout"); it != p.end()) {
    auto t = to_number(it->second);
    if (!t || *t <= 0.0) problems.emplace_back("timeout must be a positive number of seconds");
  }
}

void check_prompt(const Params& p, std::vector<std::string>& problems) {
  if (p.count("prompt") && p.count("prompt_file"))
    problems.emplace_back("prompt and prompt_file are mutually exclusive");
}

void reject_keys(const Params& p, std::initializer_list<const char*> keys, std::string_view owner,
                 std::vector<std::string>& problems) {
  for (const char* k : keys)
    if (p.count(k)) problems.push_back(std::string(k) + " does not apply to " + std::string(owner));
}

}  // namespace

bool is_state_key(std::string_view key) noexcept {
  return std::find(kStateKeys.begin(), kStateKeys.end(), key) != kStateKeys.end();
}

bool is_trigger_key(std::string_view key) noexcept {
  return std::find(kTriggerKeys.begin(), kTriggerKeys.end(), key) != kTriggerKeys.end();
}

std::optional<std::string> DialerConfig::get(const std::string& key) const {
  if (auto it = params.find(key); it != params.end()) return it->second;
  return std::nullopt;
}

double DialerConfig::temperature() const {
  if (auto v = get("temperature"))
    if (auto n = to_number(*v)) return *n;
  return 0.7;
}

double DialerConfig::timeout_seconds() const {
  if (auto v = get("timeout"))
    if (auto n = to_number(*v)) return *n;
  return 30.0;
}

DialerConfigResult resolve_dialer_config(const StateNode& node) {
  DialerConfigResult out;
  auto& problems = out.problems;
  const Params& p = node.backend;

  if (node.is_user()) {
    problems.emplace_back("user states have no backend");
    return out;
  }

  DialerConfig cfg;
  cfg.params = p;
  check_prompt(p, problems);

  if (node.kind == StateKind::Writer) {
    cfg.kind = BackendKind::Writer;
    if (!p.count("sink")) problems.emplace_back("writer requires sink");
    if (auto it = p.find("pattern"); it != p.end() && !valid_regex(it->second))
      problems.emplace_back("pattern is not a valid regular expression");
    reject_keys(p, {"script_file", "template", "endpoint", "model", "temperature"}, "writers",
                problems);
  } else {
    const int sources = static_cast<int>(p.count("script_file")) +
                        static_cast<int>(p.count("template")) +
                        static_cast<int>(p.count("endpoint"));
    if (sources != 1) {
      problems.emplace_back("dialer needs exactly one of script_file, template, endpoint");
    } else if (p.count("script_file")) {
      cfg.kind = BackendKind::Scripted;
    } else if (p.count("template")) {
      cfg.kind = BackendKind::Template;
      std::string literal = p.at("template");
      for (auto pos = literal.find("{msg}"); pos != std::string::npos; pos = literal.find("{msg}"))
        literal.erase(pos, 5);
      if (literal.empty())
        problems.emplace_back("template must contain literal text so output is never empty");
    } else {
      cfg.kind = BackendKind::HttpChat;
      check_http(p, problems, 2.0);
    }
    if (!p.count("endpoint")) reject_keys(p, {"model", "temperature", "timeout", "api_key_env"},
                                          "non-HTTP dialers", problems);
    reject_keys(p, {"sink", "field", "pattern"}, "dialers", problems);
  }

  if (problems.empty()) out.config = std::move(cfg);
  return out;
}

std::vector<std::string> check_trigger_config(const TriggerDef& def) {
  std::vector<std::string> problems;
  const Params& p = def.params;
  switch (def.kind) {
    case TriggerKind::Always:
      if (!p.empty()) problems.emplace_back("always triggers take no parameters");
      break;
    case TriggerKind::Keyword: {
      auto it = p.find("keywords");
      if (it == p.end() || it->second.find_first_not_of(" ,\t") == std::string::npos)
        problems.emplace_back("keyword trigger requires a non-empty keywords list");
      if (auto c = p.find("case"); c != p.end() && c->second != "sensitive" &&
                                   c->second != "insensitive")
        problems.emplace_back("case must be 'sensitive' or 'insensitive'");
      reject_keys(p, {"pattern", "endpoint", "model", "prompt", "prompt_file"}, "keyword triggers",
                  problems);
      break;
    }
    case TriggerKind::Pattern: {
      auto it = p.find("pattern");
      if (it == p.end())
        problems.emplace_back("pattern trigger requires pattern");
      else if (!valid_regex(it->second))
        problems.emplace_back("pattern is not a valid regular expression");
      if (auto c = p.find("case"); c != p.end() && c->second != "sensitive" &&
                                   c->second != "insensitive")
        problems.emplace_back("case must be 'sensitive' or 'insensitive'");
      reject_keys(p, {"keywords", "endpoint", "model", "prompt", "prompt_file"}, "pattern triggers",
                  problems);
      break;
    }
    case TriggerKind::LlmClassifier:
      if (!p.count("prompt") && !p.count("prompt_file"))
        problems.emplace_back("llm trigger requires prompt or prompt_file");
      check_prompt(p, problems);
      check_http(p, problems, 2.0);
      reject_keys(p, {"keywords", "pattern", "case"}, "llm triggers", problems);
      break;
  }
  return problems;
}

}  // namespace mfa
