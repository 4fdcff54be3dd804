#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "critlab/errors.hpp"
#include "critlab/network.hpp"

namespace critlab {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses CSV text with header x_0,...,x_{a-1},y_0,...,y_{b-1}.
inline Dataset parse_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset CSV is empty");
  const auto header = detail::split_csv_line(line);
  int a = 0;
  int b = 0;
  for (const auto& name : header) {
    if (name == "x_" + std::to_string(a) && b == 0) {
      ++a;
    } else if (name == "y_" + std::to_string(b)) {
      ++b;
    } else {
      throw IoError("unexpected dataset CSV column '" + name + "'");
    }
  }
  if (a == 0 || b == 0) throw IoError("dataset CSV needs x_ and y_ columns");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != a + b) {
      throw IoError("dataset CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                    " fields, expected " + std::to_string(a + b));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw IoError("dataset CSV line " + std::to_string(line_no) + ": bad number '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("dataset CSV has no samples");
  const int n = static_cast<int>(rows.size());
  MatrixXd x(a, n);
  MatrixXd y(b, n);
  for (int k = 0; k < n; ++k) {
    for (int r = 0; r < a; ++r) x(r, k) = rows[k][r];
    for (int r = 0; r < b; ++r) y(r, k) = rows[k][a + r];
  }
  return {std::move(x), std::move(y)};
}

/// Parses {"inputs": [[...], ...], "targets": [[...], ...]}, one inner array per sample.
inline Dataset parse_dataset_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("inputs") || !j.contains("targets")) {
    throw IoError("dataset JSON needs 'inputs' and 'targets'");
  }
  const auto& xs = j.at("inputs");
  const auto& ys = j.at("targets");
  if (!xs.is_array() || !ys.is_array() || xs.empty() || xs.size() != ys.size()) {
    throw IoError("dataset JSON 'inputs' and 'targets' must be non-empty arrays of equal length");
  }
  const int n = static_cast<int>(xs.size());
  auto dim_of = [](const nlohmann::json& row) {
    if (!row.is_array() || row.empty()) throw IoError("dataset JSON rows must be non-empty arrays");
    return static_cast<int>(row.size());
  };
  const int a = dim_of(xs[0]);
  const int b = dim_of(ys[0]);
  MatrixXd x(a, n);
  MatrixXd y(b, n);
  try {
    for (int k = 0; k < n; ++k) {
      if (dim_of(xs[k]) != a || dim_of(ys[k]) != b) throw IoError("dataset JSON rows have inconsistent lengths");
      for (int r = 0; r < a; ++r) x(r, k) = xs[k][r].get<double>();
      for (int r = 0; r < b; ++r) y(r, k) = ys[k][r].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset JSON: ") + e.what());
  }
  return {std::move(x), std::move(y)};
}

inline nlohmann::json dataset_to_json(const Dataset& data) {
  nlohmann::json xs = nlohmann::json::array();
  nlohmann::json ys = nlohmann::json::array();
  for (int k = 0; k < data.size(); ++k) {
    xs.push_back(std::vector<double>(data.input(k).begin(), data.input(k).end()));
    ys.push_back(std::vector<double>(data.target(k).begin(), data.target(k).end()));
  }
  return {{"inputs", xs}, {"targets", ys}};
}

/// Loads a dataset file; format "csv" or "json", or inferred from the extension when empty.
inline Dataset load_dataset(const std::string& path, std::string format = "") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  if (format.empty()) format = path.size() >= 5 && path.substr(path.size() - 5) == ".json" ? "json" : "csv";
  if (format == "csv") return parse_dataset_csv(in);
  if (format == "json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("dataset '" + path + "': " + e.what());
    }
    return parse_dataset_json(j);
  }
  throw IoError("unknown dataset format '" + format + "'");
}

}  // namespace critlab
