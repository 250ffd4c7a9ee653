#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mortpca/error.hpp"

namespace mortpca::csv {

/// Minimal reader for the unquoted comma-separated files used by this
/// project. Blank lines are skipped and fields are whitespace-trimmed.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {
    std::vector<std::string> header;
    if (!next_fields(header)) throw DataError("empty CSV input (no header)");
    for (std::size_t i = 0; i < header.size(); ++i) columns_[header[i]] = i;
    header_ = std::move(header);
  }

  const std::vector<std::string>& header() const { return header_; }

  bool has_column(const std::string& name) const {
    return columns_.count(name) != 0;
  }

  std::size_t column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) {
      throw DataError("CSV is missing required column '" + name + "'");
    }
    return it->second;
  }

  std::optional<std::size_t> optional_column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) return std::nullopt;
    return it->second;
  }

  /// Reads the next data row. Returns false at end of input.
  bool next(std::vector<std::string>& row) {
    while (next_fields(row)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (row.size() != header_.size()) {
        throw DataError("CSV row " + std::to_string(line_) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(header_.size()));
      }
      return true;
    }
    return false;
  }

  /// 1-based physical line number of the row returned last.
  std::size_t line() const { return line_; }

 private:
  bool next_fields(std::vector<std::string>& out) {
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.clear();
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return true;
  }

  static std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
  }

  std::istream& in_;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> columns_;
  std::size_t line_ = 0;
};

inline double to_double(std::string_view text, std::size_t line,
                        const char* what) {
  double value = 0.0;
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw DataError("row " + std::to_string(line) + ": cannot parse " + what +
                    " from '" + std::string(text) + "'");
  }
  return value;
}

inline int to_int(std::string_view text, std::size_t line, const char* what) {
  int value = 0;
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw DataError("row " + std::to_string(line) + ": cannot parse " + what +
                    " from '" + std::string(text) + "'");
  }
  return value;
}

/// Formats a double with the given number of significant digits.
inline std::string format(double value, int significant = 12) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", significant, value);
  return buf;
}

}  // namespace mortpca::csv
