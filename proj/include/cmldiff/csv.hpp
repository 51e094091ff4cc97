#pragma once

// Minimal RFC 4180 writer. Doubles are printed with 17 significant digits so
// that output is a pure function of the values.

#include <ostream>
#include <string>
#include <vector>

namespace cmldiff {

std::string csv_field(const std::string& s);
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  std::size_t columns_;
};

}  // namespace cmldiff
