#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hot {

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

/// Comma-separated, header row, LF line endings. Fields containing a comma,
/// quote or newline are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& field(const std::string& s);
  CsvWriter& field(const char* s) { return field(std::string(s)); }
  CsvWriter& field(double v);
  CsvWriter& field(std::uint64_t v);
  CsvWriter& field(int v) { return field(std::to_string(v)); }
  CsvWriter& field(bool v) { return field(std::string(v ? "true" : "false")); }
  /// Closes the current row; throws if its width differs from the header.
  void end_row();

  std::size_t rows() const { return rows_; }
  std::string str() const { return text_; }
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t columns_;
  std::size_t pending_ = 0;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Parses text written by CsvWriter (quoted fields supported). First row is the header.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace hot
