#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "airfuse/error.hpp"

namespace airfuse {

// Minimal comma-separated reader: UTF-8, '.' decimal point, no quoting. Every
// record keeps its 1-based line number for error reporting.
class CsvReader {
public:
  explicit CsvReader(const std::string& path);

  // Reads the next non-empty record; false at end of file.
  bool next(std::vector<std::string>& fields);
  long line() const { return line_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& message) const;

  double parse_double(const std::string& field, const std::string& what) const;
  long parse_long(const std::string& field, const std::string& what) const;

private:
  std::string path_;
  std::ifstream in_;
  long line_ = 0;
};

void split_csv_line(const std::string& line, std::vector<std::string>& fields);

// Full-precision formatting so written values reparse exactly.
std::string format_full(double v);

class CsvWriter {
public:
  explicit CsvWriter(const std::string& path);
  void row(const std::vector<std::string>& fields);
  void raw_line(const std::string& line);

private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace airfuse
