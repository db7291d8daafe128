#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfa/automaton.hpp"

namespace mfa {

enum class BackendKind { Scripted, Template, HttpChat, Writer };

std::string_view to_string(BackendKind kind) noexcept;

/// Resolved state-function configuration for a machine node. The kind is
/// inferred from which source attribute is present: script_file, template
/// or endpoint for dialers; writers are always Writer.
struct DialerConfig {
  BackendKind kind = BackendKind::Scripted;
  Params params;

  [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
  [[nodiscard]] double temperature() const;  // default 0.7 for dialers
  [[nodiscard]] double timeout_seconds() const;  // default 30
};

struct DialerConfigResult {
  std::optional<DialerConfig> config;
  std::vector<std::string> problems;
};

/// Pure check of a machine node's configuration (no file access).
DialerConfigResult resolve_dialer_config(const StateNode& node);

/// Pure check of a trigger definition's parameters; empty when valid.
std::vector<std::string> check_trigger_config(const TriggerDef& def);

/// Attribute keys accepted by the definition language.
bool is_state_key(std::string_view key) noexcept;
bool is_trigger_key(std::string_view key) noexcept;

}  // namespace mfa
