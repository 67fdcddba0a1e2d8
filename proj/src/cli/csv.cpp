#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpdense/cli.hpp"
#include "gpdense/errors.hpp"

namespace gpdense::cli {

namespace {

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    if (b == std::string::npos) return false;
    cell = cell.substr(b, e - b + 1);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') return false;
    out.push_back(v);
  }
  if (!line.empty() && line.back() == ',') return false;
  return !out.empty();
}

}  // namespace

Eigen::MatrixXd parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  std::string line;
  int number = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!parse_row(line, row)) {
      if (first) {  // header
        first = false;
        continue;
      }
      throw UsageError(source + ":" + std::to_string(number) + ": non-numeric or empty cell");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw UsageError(source + ":" + std::to_string(number) + ": expected " +
                       std::to_string(rows.front().size()) + " fields, found " +
                       std::to_string(row.size()));
    rows.push_back(row);
  }
  if (rows.empty()) throw UsageError(source + ": no data rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

Dataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open CSV file '" + path + "'");
  return Dataset(parse_csv(in, path));
}

void write_csv(const std::string& path, const Eigen::MatrixXd& points) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write CSV file '" + path + "'");
  char buf[40];
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", points(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace gpdense::cli
