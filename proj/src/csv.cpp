#include "airfuse/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace airfuse {

CsvReader::CsvReader(const std::string& path) : path_(path), in_(path) {
  if (!in_) throw IoError("cannot open '" + path + "' for reading");
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_csv_line(line, fields);
    return true;
  }
  return false;
}

void CsvReader::fail(const std::string& message) const {
  throw ParseError(path_ + ": " + message, line_);
}

double CsvReader::parse_double(const std::string& field, const std::string& what) const {
  if (field.empty()) fail("empty " + what + " field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (errno != 0 || end != field.c_str() + field.size() || !std::isfinite(v)) {
    fail("invalid " + what + " value '" + field + "'");
  }
  return v;
}

long CsvReader::parse_long(const std::string& field, const std::string& what) const {
  if (field.empty()) fail("empty " + what + " field");
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(field.c_str(), &end, 10);
  if (errno != 0 || end != field.c_str() + field.size()) {
    fail("invalid " + what + " value '" + field + "'");
  }
  return v;
}

void split_csv_line(const std::string& line, std::vector<std::string>& fields) {
  fields.clear();
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
  if (!out_) throw IoError("write failure on '" + path_ + "'");
}

void CsvWriter::raw_line(const std::string& line) {
  out_ << line << '\n';
  if (!out_) throw IoError("write failure on '" + path_ + "'");
}

}  // namespace airfuse
