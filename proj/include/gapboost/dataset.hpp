// Copyright 2026 The GapBoost Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gapboost/common.hpp"
#include "gapboost/prng.hpp"

namespace gapboost {

/// Column-oriented training/test data. Labels are contiguous class ids in
/// 0..n_classes-1; label_values maps each id back to the label as it
/// appeared in the source file. Feature columns are dense (sparse input is
/// zero-filled) and sort_index[f] lists sample ids in ascending order of
/// column f, ties broken by ascending id.
struct Dataset {
  std::int32_t n_samples = 0;
  std::int32_t n_features = 0;
  std::int32_t n_classes = 0;
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> label_values;
  std::vector<std::vector<double>> columns;            // [feature][sample]
  std::vector<std::vector<std::int32_t>> sort_index;   // [feature][rank]
};

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_label(std::string_view s) {
  const auto v = parse_double(s);
  if (!v || !std::isfinite(*v)) return std::nullopt;
  if (*v != std::floor(*v) || std::abs(*v) > 9.0e15) return std::nullopt;
  return static_cast<std::int64_t>(*v);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Turns raw file labels into contiguous ids. Without an explicit mapping
/// the distinct labels are ranked in ascending numeric order; with one, ids
/// follow the given table (unknown labels are an error).
inline void assign_labels(Dataset& d, const std::vector<std::int64_t>& raw,
                          std::int32_t n_classes,
                          const std::vector<std::int64_t>* label_map) {
  std::vector<std::int64_t> table;
  if (label_map != nullptr) {
    table = *label_map;
  } else {
    table = raw;
    std::sort(table.begin(), table.end());
    table.erase(std::unique(table.begin(), table.end()), table.end());
  }
  std::int32_t k = n_classes > 0 ? n_classes : static_cast<std::int32_t>(table.size());
  if (static_cast<std::size_t>(k) < table.size())
    throw std::runtime_error("found " + format_int(static_cast<std::int64_t>(table.size())) +
                             " distinct labels but only " + format_int(k) + " classes declared");
  if (k < 3)
    throw std::runtime_error("multi-class data required (K >= 3), got K=" + format_int(k));
  d.n_classes = k;
  d.label_values = table;
  d.labels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto it = std::lower_bound(table.begin(), table.end(), raw[i]);
    if (it == table.end() || *it != raw[i])
      throw std::runtime_error("label " + format_int(raw[i]) + " not present in the label mapping");
    d.labels[i] = static_cast<std::int32_t>(it - table.begin());
  }
}

}  // namespace detail

/// Stable per-feature sort orders; ties keep ascending sample id so split
/// enumeration is deterministic.
inline void build_sort_index(Dataset& d) {
  d.sort_index.assign(d.n_features, {});
  for (std::int32_t f = 0; f < d.n_features; ++f) {
    auto& idx = d.sort_index[f];
    idx.resize(d.n_samples);
    std::iota(idx.begin(), idx.end(), 0);
    const auto& col = d.columns[f];
    std::stable_sort(idx.begin(), idx.end(),
                     [&col](std::int32_t a, std::int32_t b) { return col[a] < col[b]; });
  }
}

/// libsvm text: `label idx:val idx:val ...` per line. Indices may be
/// 0-based or 1-based; 0-based is assumed as soon as an index 0 appears.
/// Missing entries are zero-filled.
inline Dataset parse_libsvm(std::istream& in, std::int32_t n_classes = 0,
                            const std::vector<std::int64_t>* label_map = nullptr) {
  std::vector<std::int64_t> raw_labels;
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows;
  std::int64_t max_index = -1;
  bool saw_zero_index = false;

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    std::istringstream ls{std::string(trimmed)};
    std::string tok;
    ls >> tok;
    const auto label = detail::parse_label(tok);
    if (!label)
      throw std::runtime_error("line " + format_int(line_no) + ": label not an integer: '" + tok + "'");
    std::vector<std::pair<std::int64_t, double>> row;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
        throw std::runtime_error("line " + format_int(line_no) + ": malformed entry '" + tok + "'");
      std::int64_t idx{};
      {
        const char* first = tok.data();
        const char* last = tok.data() + colon;
        auto [p, ec] = std::from_chars(first, last, idx);
        if (ec != std::errc{} || p != last || idx < 0)
          throw std::runtime_error("line " + format_int(line_no) + ": malformed index in '" + tok + "'");
      }
      const auto val = detail::parse_double(std::string_view(tok).substr(colon + 1));
      if (!val)
        throw std::runtime_error("line " + format_int(line_no) + ": malformed value in '" + tok + "'");
      if (idx == 0) saw_zero_index = true;
      max_index = std::max(max_index, idx);
      row.emplace_back(idx, *val);
    }
    raw_labels.push_back(*label);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no samples");

  Dataset d;
  d.n_samples = static_cast<std::int32_t>(rows.size());
  const std::int64_t offset = saw_zero_index ? 0 : 1;
  d.n_features = static_cast<std::int32_t>(std::max<std::int64_t>(max_index - offset + 1, 0));
  d.columns.assign(d.n_features, std::vector<double>(d.n_samples, 0.0));
  for (std::int32_t i = 0; i < d.n_samples; ++i)
    for (const auto& [idx, val] : rows[i]) {
      const std::int64_t f = idx - offset;
      if (f < 0)
        throw std::runtime_error("feature index " + format_int(idx) + " below the detected index base");
      d.columns[f][i] = val;
    }
  detail::assign_labels(d, raw_labels, n_classes, label_map);
  build_sort_index(d);
  return d;
}

inline Dataset parse_libsvm(const std::string& path, std::int32_t n_classes = 0,
                            const std::vector<std::int64_t>* label_map = nullptr) {
  if (path == "-") return parse_libsvm(std::cin, n_classes, label_map);
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return parse_libsvm(f, n_classes, label_map);
}

/// Rectangular numeric CSV with an optional header row (detected when any
/// cell of the first row is non-numeric). The label column is removed from
/// the feature matrix.
inline Dataset parse_csv(std::istream& in, std::int32_t label_column = 0,
                         std::int32_t n_classes = 0,
                         const std::vector<std::int64_t>* label_map = nullptr) {
  std::vector<std::vector<double>> cells;
  std::string line;
  std::int64_t line_no = 0;
  std::size_t width = 0;
  bool first_content_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    const std::string row_text{trimmed};
    for (std::size_t pos = 0; pos <= row_text.size(); ++pos) {
      if (pos == row_text.size() || row_text[pos] == ',') {
        fields.push_back(detail::trim(std::string_view(row_text).substr(start, pos - start)));
        start = pos + 1;
      }
    }
    std::vector<double> parsed;
    parsed.reserve(fields.size());
    bool all_numeric = true;
    for (const auto f : fields) {
      const auto v = detail::parse_double(f);
      if (!v) {
        all_numeric = false;
        break;
      }
      parsed.push_back(*v);
    }
    if (first_content_row) {
      first_content_row = false;
      if (!all_numeric) continue;  // header row
      width = fields.size();
    } else if (!all_numeric) {
      std::size_t bad = 0;
      for (; bad < fields.size(); ++bad)
        if (!detail::parse_double(fields[bad])) break;
      throw std::runtime_error("line " + format_int(line_no) + ": non-numeric cell '" +
                               std::string(fields[bad]) + "'");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw std::runtime_error("line " + format_int(line_no) + ": row has " +
                               format_int(static_cast<std::int64_t>(fields.size())) +
                               " cells, expected " + format_int(static_cast<std::int64_t>(width)));
    cells.push_back(std::move(parsed));
  }
  if (cells.empty()) throw std::runtime_error("no samples");
  if (label_column < 0 || static_cast<std::size_t>(label_column) >= width)
    throw std::runtime_error("label column " + format_int(label_column) + " out of range for " +
                             format_int(static_cast<std::int64_t>(width)) + " columns");

  Dataset d;
  d.n_samples = static_cast<std::int32_t>(cells.size());
  d.n_features = static_cast<std::int32_t>(width) - 1;
  d.columns.assign(d.n_features, std::vector<double>(d.n_samples, 0.0));
  std::vector<std::int64_t> raw_labels(d.n_samples);
  for (std::int32_t i = 0; i < d.n_samples; ++i) {
    const double lv = cells[i][label_column];
    if (!std::isfinite(lv) || lv != std::floor(lv))
      throw std::runtime_error("sample " + format_int(i + 1) + ": label not an integer");
    raw_labels[i] = static_cast<std::int64_t>(lv);
    std::int32_t f = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<std::int32_t>(c) == label_column) continue;
      d.columns[f++][i] = cells[i][c];
    }
  }
  detail::assign_labels(d, raw_labels, n_classes, label_map);
  build_sort_index(d);
  return d;
}

inline Dataset parse_csv(const std::string& path, std::int32_t label_column = 0,
                         std::int32_t n_classes = 0,
                         const std::vector<std::int64_t>* label_map = nullptr) {
  if (path == "-") return parse_csv(std::cin, label_column, n_classes, label_map);
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return parse_csv(f, label_column, n_classes, label_map);
}

/// Dense 1-based libsvm output. Values are written with the shortest
/// round-trip encoding, so parse(write(d)) reproduces every 64-bit value
/// exactly.
inline void write_libsvm(const Dataset& d, std::ostream& os) {
  for (std::int32_t i = 0; i < d.n_samples; ++i) {
    os << d.label_values[d.labels[i]];
    for (std::int32_t f = 0; f < d.n_features; ++f)
      os << ' ' << (f + 1) << ':' << format_double(d.columns[f][i]);
    os << '\n';
  }
}

inline void write_libsvm(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  write_libsvm(d, f);
}

/// Deterministic stratified sample without replacement: every class keeps at
/// least one sample and per-class quotas follow largest-remainder rounding of
/// the class proportions. Identical (dataset, n, seed) inputs always select
/// the same sample ids.
inline Dataset subsample(const Dataset& d, std::int32_t n, std::uint64_t seed) {
  if (n > d.n_samples) throw std::invalid_argument("subsample size exceeds dataset size");
  if (n < d.n_classes)
    throw std::invalid_argument("subsample size " + format_int(n) + " below class count " +
                                format_int(d.n_classes));
  if (n == d.n_samples) return d;

  const std::int32_t k = d.n_classes;
  std::vector<std::vector<std::int32_t>> by_class(k);
  for (std::int32_t i = 0; i < d.n_samples; ++i) by_class[d.labels[i]].push_back(i);
  for (std::int32_t c = 0; c < k; ++c)
    if (by_class[c].empty())
      throw std::runtime_error("class " + format_int(c) + " has no samples; cannot stratify");

  std::vector<std::int64_t> quota(k, 1);
  const std::int64_t rem = n - k;
  const std::int64_t total_cap = d.n_samples - k;
  if (rem > 0) {
    std::vector<std::int64_t> extra(k, 0), remainder(k, 0);
    std::int64_t given = 0;
    for (std::int32_t c = 0; c < k; ++c) {
      const std::int64_t cap = static_cast<std::int64_t>(by_class[c].size()) - 1;
      extra[c] = rem * cap / total_cap;
      remainder[c] = rem * cap - extra[c] * total_cap;
      given += extra[c];
    }
    std::vector<std::int32_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
      return a < b;
    });
    for (std::int64_t leftover = rem - given; leftover > 0;) {
      for (const std::int32_t c : order) {
        if (leftover == 0) break;
        const std::int64_t cap = static_cast<std::int64_t>(by_class[c].size()) - 1;
        if (extra[c] < cap) {
          ++extra[c];
          --leftover;
        }
      }
    }
    for (std::int32_t c = 0; c < k; ++c) quota[c] += extra[c];
  }

  SplitMix64 rng(seed);
  std::vector<std::int32_t> selected;
  selected.reserve(n);
  for (std::int32_t c = 0; c < k; ++c) {
    auto ids = by_class[c];  // ascending
    const auto q = static_cast<std::size_t>(quota[c]);
    for (std::size_t j = 0; j < q; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(rng.below(ids.size() - j));
      std::swap(ids[j], ids[r]);
    }
    selected.insert(selected.end(), ids.begin(), ids.begin() + q);
  }
  std::sort(selected.begin(), selected.end());

  Dataset out;
  out.n_samples = n;
  out.n_features = d.n_features;
  out.n_classes = d.n_classes;
  out.label_values = d.label_values;
  out.labels.resize(n);
  out.columns.assign(d.n_features, std::vector<double>(n, 0.0));
  for (std::int32_t j = 0; j < n; ++j) {
    const std::int32_t src = selected[j];
    out.labels[j] = d.labels[src];
    for (std::int32_t f = 0; f < d.n_features; ++f) out.columns[f][j] = d.columns[f][src];
  }
  build_sort_index(out);
  return out;
}

}  // namespace gapboost
