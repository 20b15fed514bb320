#pragma once

// Internal CSV helpers: 17-significant-digit decimal text so that every
// round-trip through our files is lossless.

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "odekin/errors.hpp"

namespace odekin::detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(',', start);
    if (at == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, at - start));
    start = at + 1;
  }
  return fields;
}

inline double parse_double(std::string_view field, const std::string& file, int row) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError(file + ": row " + std::to_string(row) + ": cannot parse number '" +
                  std::string(field) + "'");
  }
  return value;
}

inline std::string sidecar_path(const std::string& csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() > suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return csv_path.substr(0, csv_path.size() - suffix.size()) + ".meta.json";
  }
  return csv_path + ".meta.json";
}

}  // namespace odekin::detail
