#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cernn/spectral.hpp"

namespace cernn {

struct Table {
  std::vector<std::string> header;  // empty when the file had none
  Matrix values;
};

// Numeric CSV. A first row that does not parse as numbers is taken as a header.
// Ragged, empty or non-numeric data rows throw InvalidInput naming the line.
Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);

// Reals are printed with %.17g so a write/read round trip is exact.
void write_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header = {});
void write_csv_file(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {});

std::string format_real(double x);

}  // namespace cernn
