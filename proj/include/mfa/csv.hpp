#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mfa::csv {

/// RFC 4180 rows: quoted fields may hold commas, newlines and "" escapes.
/// Accepts LF or CRLF line endings. Throws PARSE on an unterminated quote.
std::vector<std::vector<std::string>> parse(std::string_view text);

/// One CSV line (with trailing '\n'), quoting only where needed.
std::string format_row(const std::vector<std::string>& fields);

}  // namespace mfa::csv
