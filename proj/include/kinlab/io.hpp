#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace kinlab::io {

// Shortest round-trip decimal form, '.' decimal point, locale-independent.
std::string format_double(double v);

// CSV with a header row, comma separators, LF endings; written byte-stable.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(std::span<const double> values);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  size_t ncols_ = 0;
};

void write_text_file(const std::string& path, const std::string& content);
bool make_directories(const std::string& path);
std::string read_text_file(const std::string& path);

}  // namespace kinlab::io
