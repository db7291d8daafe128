#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfa/automaton.hpp"

namespace mfa::dsl {

struct ParseError {
  int line = 0;
  int column = 0;
  std::string expected;
  std::string found;

  [[nodiscard]] std::string message() const;
};

struct ParseResult {
  std::optional<Automaton> automaton;  // set only when errors is empty
  std::vector<ParseError> errors;

  [[nodiscard]] bool ok() const noexcept { return errors.empty(); }
};

/// Parses one definition. Name resolution (unknown states, triggers,
/// histories) is left to validate(); only syntax, attribute keys and
/// duplicate declarations are reported here. Never throws.
ParseResult parse(std::string_view text);

/// Canonical text: states, triggers, histories and edges each sorted, the
/// initial state last. parse(serialize(a)) is structurally equal to a.
std::string serialize(const Automaton& automaton);

/// Reads and parses a file; throws PARSE with "path:line:col: ..." for the
/// first error, IO if unreadable.
Automaton load_file(const std::filesystem::path& path);

/// Quotes a string with the escapes the lexer understands.
std::string quote(std::string_view text);

}  // namespace mfa::dsl
