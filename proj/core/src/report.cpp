#include "inductlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace inductlab {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_header_block(std::ostream& out, const HeaderFields& fields) {
  out << "# inductlab " << kVersion << '\n';
  for (const auto& [key, value] : fields) out << "# " << key << '=' << value << '\n';
}

}  // namespace inductlab
