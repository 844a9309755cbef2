#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace retro::csv {

// RFC 4180 style reader: quoted fields, embedded commas/newlines, "" escapes.
// Returns rows of fields; empty trailing line is ignored.
std::vector<std::vector<std::string>> parse(std::string_view text);

// Quotes a field only when needed.
std::string format_field(std::string_view field);

std::string format_row(const std::vector<std::string>& fields);

} // namespace retro::csv
