#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace falldef {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Parses the whole of `text` (surrounding blanks allowed) as a double.
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace falldef
