#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace snl {

// Shortest round-trippable form; identical inputs give identical bytes.
inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

// First line of every emitted CSV: "# snl <table> v<version>".
inline void write_csv_header(std::ostream& out, std::string_view table, int version,
                             const std::vector<std::string>& columns) {
  out << "# snl " << table << " v" << version << '\n';
  write_csv_row(out, columns);
}

}  // namespace snl
