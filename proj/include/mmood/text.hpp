#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmood {

[[nodiscard]] std::string trim(std::string_view s);
/// ASCII lowercase; bytes outside A-Z pass through unchanged.
[[nodiscard]] std::string to_lower(std::string_view s);
[[nodiscard]] std::vector<std::string> split_lines(std::string_view s);
[[nodiscard]] bool iequals(std::string_view a, std::string_view b);

[[nodiscard]] std::string read_file(std::string const& path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(std::string const& path, std::string_view bytes);

} // namespace mmood
