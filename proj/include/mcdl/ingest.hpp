#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcdl/common.hpp"

namespace mcdl {

/// Tabular data: one feature vector per row, a regression target per row and
/// an optional categorical label per row.
struct Dataset {
  Matrix rows;
  Vector targets;
  std::optional<std::vector<std::string>> labels;
  std::vector<std::string> feature_names;
  std::string target_name = "target";
  std::string label_name;

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? feature_names.size() : rows.front().size(); }
  bool empty() const { return rows.empty(); }
  bool has_labels() const { return labels.has_value(); }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.label_name = label_name;
    out.rows.reserve(indices.size());
    out.targets.reserve(indices.size());
    if (labels) out.labels.emplace();
    for (std::size_t i : indices) {
      out.rows.push_back(rows[i]);
      out.targets.push_back(targets[i]);
      if (labels) out.labels->push_back((*labels)[i]);
    }
    return out;
  }

  /// Throws InputError if any structural invariant is violated.
  void validate() const {
    if (rows.empty()) throw InputError("dataset is empty");
    const std::size_t d = rows.front().size();
    if (d == 0) throw InputError("dataset has no feature columns");
    if (targets.size() != rows.size()) throw InputError("targets length differs from rows length");
    if (labels && labels->size() != rows.size()) {
      throw InputError("labels length differs from rows length");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) {
        throw InputError("row " + std::to_string(i) + " has dimension " +
                         std::to_string(rows[i].size()) + ", expected " + std::to_string(d));
      }
      if (!all_finite(rows[i])) throw InputError("row " + std::to_string(i) + " has a non-finite feature");
      if (!std::isfinite(targets[i])) throw InputError("row " + std::to_string(i) + " has a non-finite target");
    }
  }
};

/// Per-feature z-score statistics. `delta` is the population standard
/// deviation; features with delta == 0 are flagged constant and left as-is.
struct NormParams {
  Vector mean;
  Vector delta;
  std::vector<bool> constant;

  std::size_t dim() const { return mean.size(); }

  double forward(std::size_t f, double x) const {
    return constant[f] ? x : (x - mean[f]) / delta[f];
  }
  double inverse(std::size_t f, double z) const {
    return constant[f] ? z : z * delta[f] + mean[f];
  }

  Vector apply(std::span<const double> row) const {
    if (row.size() != dim()) {
      throw InputError("row dimension " + std::to_string(row.size()) +
                       " does not match normalization dimension " + std::to_string(dim()));
    }
    Vector out(row.size());
    for (std::size_t f = 0; f < row.size(); ++f) out[f] = forward(f, row[f]);
    return out;
  }

  Vector invert(std::span<const double> row) const {
    Vector out(row.size());
    for (std::size_t f = 0; f < row.size(); ++f) out[f] = inverse(f, row[f]);
    return out;
  }

  /// Statistics over the columns of `rows` (two-pass for accuracy).
  static NormParams fit(const Matrix& rows) {
    if (rows.empty()) throw InputError("cannot fit normalization on an empty dataset");
    const std::size_t d = rows.front().size();
    const double n = static_cast<double>(rows.size());
    NormParams p;
    p.mean.assign(d, 0.0);
    p.delta.assign(d, 0.0);
    p.constant.assign(d, false);
    for (const auto& r : rows) {
      for (std::size_t f = 0; f < d; ++f) p.mean[f] += r[f];
    }
    for (auto& m : p.mean) m /= n;
    for (const auto& r : rows) {
      for (std::size_t f = 0; f < d; ++f) {
        const double c = r[f] - p.mean[f];
        p.delta[f] += c * c;
      }
    }
    for (std::size_t f = 0; f < d; ++f) {
      p.delta[f] = std::sqrt(p.delta[f] / n);
      p.constant[f] = p.delta[f] == 0.0;
    }
    return p;
  }

  static NormParams fit(std::span<const double> column) {
    Matrix rows;
    rows.reserve(column.size());
    for (double v : column) rows.push_back({v});
    return fit(rows);
  }
};

/// Column roles for `load_csv`. An empty `features` list means "every column
/// that is neither the target nor the label".
struct CsvSchema {
  std::string target;
  std::string label;
  std::vector<std::string> features;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

/// Parses a headed CSV stream. `source` names the input in error messages.
inline Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::blank(line)) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw InputError(source + ": empty file (no header row)");
  for (auto& h : header) h = detail::trim(h);

  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  if (schema.target.empty()) throw ConfigError("schema does not name a target column");
  const auto target_col = column_of(schema.target);
  if (!target_col) throw InputError(source + ": target column '" + schema.target + "' not in header");
  std::optional<std::size_t> label_col;
  if (!schema.label.empty()) {
    label_col = column_of(schema.label);
    if (!label_col) throw InputError(source + ": label column '" + schema.label + "' not in header");
  }
  std::vector<std::size_t> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != *target_col && (!label_col || c != *label_col)) feature_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.features) {
      const auto c = column_of(name);
      if (!c) throw InputError(source + ": feature column '" + name + "' not in header");
      feature_cols.push_back(*c);
    }
  }
  if (feature_cols.empty()) throw InputError(source + ": no feature columns");

  Dataset data;
  data.target_name = schema.target;
  data.label_name = schema.label;
  for (std::size_t c : feature_cols) data.feature_names.push_back(header[c]);
  if (label_col) data.labels.emplace();

  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    ++row_no;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError(source + ": ragged row " + std::to_string(row_no) + " (line " +
                       std::to_string(line_no) + ") has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(header.size()));
    }
    auto numeric = [&](std::size_t c) {
      double v = 0.0;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw InputError(source + ": row " + std::to_string(row_no) + " column '" + header[c] +
                         "': not a finite number: '" + cells[c] + "'");
      }
      return v;
    };
    Vector row;
    row.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) row.push_back(numeric(c));
    data.rows.push_back(std::move(row));
    data.targets.push_back(numeric(*target_col));
    if (label_col) data.labels->push_back(detail::trim(cells[*label_col]));
  }
  if (data.rows.empty()) throw InputError(source + ": empty dataset (header only, no data rows)");
  data.validate();
  return data;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file '" + path + "'");
  return parse_csv(in, schema, path);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (const auto& name : data.feature_names) out << name << ',';
  out << data.target_name;
  if (data.labels) out << ',' << data.label_name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.rows[i]) out << format_double(v) << ',';
    out << format_double(data.targets[i]);
    if (data.labels) out << ',' << (*data.labels)[i];
    out << '\n';
  }
}

/// Z-scores every non-constant feature; constant features pass through.
inline std::pair<Dataset, NormParams> zscore_normalize(const Dataset& data) {
  if (data.empty()) throw InputError("cannot normalize an empty dataset");
  NormParams params = NormParams::fit(data.rows);
  Dataset out = data;
  for (auto& row : out.rows) row = params.apply(row);
  return {std::move(out), std::move(params)};
}

inline Dataset denormalize(const Dataset& data, const NormParams& params) {
  Dataset out = data;
  for (auto& row : out.rows) row = params.invert(row);
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then the first round(n * test_fraction) indices become the
/// test side. Both sides are returned in ascending row order.
inline SplitIndices split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InputError("test fraction must lie strictly between 0 and 1, got " + format_double(test_fraction));
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) {
    throw InputError("test fraction " + format_double(test_fraction) + " leaves an empty partition for " +
                     std::to_string(n) + " rows");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  SplitIndices out;
  out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

inline std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  const auto idx = split_indices(data.size(), test_fraction, seed);
  return {data.subset(idx.train), data.subset(idx.test)};
}

/// Distinct labels in lexicographic order; the index into this list is the
/// class id used by the classifiers.
inline std::vector<std::string> label_vocabulary(const std::vector<std::string>& labels) {
  std::vector<std::string> vocab = labels;
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

inline std::vector<int> encode_labels(const std::vector<std::string>& labels,
                                      const std::vector<std::string>& vocab) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), l);
    if (it == vocab.end() || *it != l) throw InputError("label '" + l + "' not in vocabulary");
    out.push_back(static_cast<int>(it - vocab.begin()));
  }
  return out;
}

}  // namespace mcdl
