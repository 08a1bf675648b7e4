#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "qcd/errors.hpp"

namespace qcd {

/// Round-trip exact formatting: 17 significant digits, "inf"/"-inf"/"nan".
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comma-separated writer with a mandatory header row. Fields are written
/// verbatim, so callers keep commas out of text fields.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    write_fields(header);
  }

  template <class... Ts>
  void row(const Ts&... fields) {
    if (sizeof...(Ts) != columns_) throw DimensionMismatch(path_.string() + ": row width differs from header");
    std::vector<std::string> cells;
    (cells.push_back(cell(fields)), ...);
    write_fields(cells);
  }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  template <class T>
    requires std::is_arithmetic_v<T>
  static std::string cell(T v) {
    if constexpr (std::is_floating_point_v<T>)
      return format_double(static_cast<double>(v));
    else
      return std::to_string(v);
  }

  void write_fields(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw Error("write failed on " + path_.string());
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace qcd
