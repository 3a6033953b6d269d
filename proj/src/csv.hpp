#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmhs::detail {

// Minimal RFC 4180 field handling: fields containing a comma, quote or line
// break are quoted, embedded quotes doubled. Records never span lines here.
std::vector<std::string> split_csv_line(std::string_view line, bool* ok = nullptr);
std::string csv_field(std::string_view value);
std::string join_csv(const std::vector<std::string>& fields);

}  // namespace mmhs::detail
