#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace inductlab {

inline constexpr const char* kVersion = "0.1.0";

// Nine significant digits; nan and inf spelled out.
std::string format_number(double v);

using HeaderFields = std::vector<std::pair<std::string, std::string>>;

// "# key=value" lines, starting with "# inductlab <version>". CSV consumers
// skip them as comments.
void write_header_block(std::ostream& out, const HeaderFields& fields);

}  // namespace inductlab
