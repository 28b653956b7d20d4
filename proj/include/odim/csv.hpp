#pragma once

#include <cmath>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "odim/matrix.hpp"

namespace odim {

// Numeric CSV ingestion. Every non-label cell must parse as a finite double;
// labels, when a label column is named, must be 0 or 1. Errors carry the
// 1-based line and column of the offending cell.
struct DatasetFile {
  std::string path;
  char delimiter = ',';
  bool header = true;
  std::string label_column;  // name (with header) or 0-based index; empty = none
};

struct Dataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> feature_names;
};

namespace detail {

inline bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  if (first == last) return false;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline Dataset load_csv(const DatasetFile& f) {
  std::ifstream in(f.path);
  if (!in) throw DataError("cannot open file: " + f.path);

  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> names;
  std::size_t ncols = 0;
  std::optional<std::size_t> label_idx;

  if (f.header) {
    if (!std::getline(in, line)) throw DataError(f.path + ": empty file");
    ++lineno;
    names = detail::split_line(line, f.delimiter);
    for (auto& s : names) s = detail::trim(s);
    ncols = names.size();
  }

  if (!f.label_column.empty()) {
    if (f.header) {
      for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == f.label_column) label_idx = j;
    }
    if (!label_idx) {
      // fall back to a 0-based column index
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(
          f.label_column.data(), f.label_column.data() + f.label_column.size(), idx);
      if (ec == std::errc{} && ptr == f.label_column.data() + f.label_column.size()) {
        label_idx = idx;
      } else {
        throw DataError(f.path + ": label column '" + f.label_column + "' not found");
      }
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t nrows = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_line(line, f.delimiter);
    if (ncols == 0) {
      ncols = cells.size();
      if (label_idx && *label_idx >= ncols)
        throw DataError(f.path + ": label column index out of range");
    }
    if (cells.size() != ncols)
      throw DataError(f.path + ": line " + std::to_string(lineno) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(ncols));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(cells[j], v))
        throw DataError(f.path + ": line " + std::to_string(lineno) + ", column " +
                        std::to_string(j + 1) + ": cannot parse '" + cells[j] +
                        "' as a finite number");
      if (label_idx && j == *label_idx) {
        if (v != 0.0 && v != 1.0)
          throw DataError(f.path + ": line " + std::to_string(lineno) + ", column " +
                          std::to_string(j + 1) + ": label must be 0 or 1");
        labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
    ++nrows;
  }
  if (nrows == 0) throw DataError(f.path + ": no data rows");
  if (label_idx && *label_idx >= ncols)
    throw DataError(f.path + ": label column index out of range");

  Dataset ds;
  const std::size_t nfeat = ncols - (label_idx ? 1 : 0);
  ds.features.rows = nrows;
  ds.features.cols = nfeat;
  ds.features.data = std::move(values);
  if (label_idx) ds.labels = std::move(labels);
  if (f.header) {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (!label_idx || j != *label_idx) ds.feature_names.push_back(names[j]);
  }
  return ds;
}

}  // namespace odim
