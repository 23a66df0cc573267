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
#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include "gapboost/dataset.hpp"
#include "gapboost/parallel.hpp"

namespace gapboost {

/// A split is invalid if either side carries less than this much total
/// weight; leaf-value denominators are floored at the same constant. The
/// second-order weights p(1-p) vanish as training converges, and flooring is
/// what keeps the weighted split search and the Newton leaf step stable.
inline constexpr double kMinChildWeight = 1e-12;

/// Splits whose weighted-SE reduction does not exceed this are treated as
/// no improvement.
inline constexpr double kMinSplitGain = 1e-12;

struct SplitCandidate {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::int32_t left_count = 0;

  bool operator==(const SplitCandidate&) const = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Binary regression tree with axis-aligned threshold splits. Samples with
/// feature value <= threshold go left. Node 0 is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;
  std::int32_t n_leaves = 0;

  double predict(std::span<const double> x) const {
    std::int32_t id = 0;
    while (!nodes[id].is_leaf())
      id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
    return nodes[id].value;
  }

  /// Prediction straight off a column store, no row gather.
  double predict_at(const Dataset& d, std::int32_t sample) const {
    std::int32_t id = 0;
    while (!nodes[id].is_leaf())
      id = d.columns[nodes[id].feature][sample] <= nodes[id].threshold ? nodes[id].left
                                                                       : nodes[id].right;
    return nodes[id].value;
  }

  bool operator==(const RegressionTree&) const = default;
};

inline double predict_tree(const RegressionTree& tree, std::span<const double> x) {
  return tree.predict(x);
}

namespace detail {

struct FeatureScan {
  double gain = 0.0;
  double threshold = 0.0;
  std::int32_t left_count = 0;
  bool found = false;
};

/// Midpoint between two consecutive distinct sorted values; falls back to
/// the lower value if rounding would reach the upper one, so `x <= threshold`
/// still routes both sides correctly.
inline double split_threshold(double lo, double hi) {
  double mid = lo + (hi - lo) * 0.5;
  if (!(mid < hi)) mid = lo;
  return mid;
}

/// One prefix-sum pass over a node's members in ascending feature order.
/// Candidate boundaries sit between consecutive distinct values; both sides
/// must carry at least kMinChildWeight. Ties keep the lowest threshold.
inline FeatureScan scan_feature(const std::vector<double>& column,
                                std::span<const std::int32_t> order,
                                std::span<const double> zw, std::span<const double> w,
                                double total_zw, double total_w) {
  FeatureScan best;
  const std::size_t n = order.size();
  if (n < 2 || !(total_w > 0.0)) return best;
  const double total_term = total_zw * total_zw / total_w;
  double nl = 0.0, dl = 0.0;
  double prev = column[order[0]];
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const std::int32_t id = order[j];
    nl += zw[id];
    dl += w[id];
    const double next = column[order[j + 1]];
    if (next > prev) {
      const double dr = total_w - dl;
      if (dl >= kMinChildWeight && dr >= kMinChildWeight) {
        const double nr = total_zw - nl;
        const double gain = nl * nl / dl + nr * nr / dr - total_term;
        if (gain > kMinSplitGain && (!best.found || gain > best.gain)) {
          best.gain = gain;
          best.threshold = split_threshold(prev, next);
          best.left_count = static_cast<std::int32_t>(j + 1);
          best.found = true;
        }
      }
    }
    prev = next;
  }
  return best;
}

}  // namespace detail

/// Weighted-SE gain, in its prefix-sum form, of splitting `order` after the
/// first `left_count` entries. Exposed for verification against the
/// definitional sum-of-squares form.
inline double weighted_se_gain(std::span<const double> z, std::span<const double> w,
                               std::span<const std::int32_t> order, std::int32_t left_count) {
  double nl = 0.0, dl = 0.0, nt = 0.0, dt = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto id = order[j];
    const double zw = z[id] * w[id];
    nt += zw;
    dt += w[id];
    if (j < static_cast<std::size_t>(left_count)) {
      nl += zw;
      dl += w[id];
    }
  }
  const double nr = nt - nl;
  const double dr = dt - dl;
  return nl * nl / dl + nr * nr / dr - nt * nt / dt;
}

/// Best split over all features and all boundaries between distinct values.
/// Ties break toward the lower feature index, then the lower threshold.
/// Returns nullopt when no candidate improves the weighted SE.
inline std::optional<SplitCandidate> best_split(std::span<const double> z,
                                                std::span<const double> w,
                                                std::span<const std::int32_t> samples,
                                                const Dataset& data, int threads = 1) {
  if (samples.size() < 2) return std::nullopt;
  std::vector<double> zw(data.n_samples, 0.0);
  double total_zw = 0.0, total_w = 0.0;
  for (const auto id : samples) {
    zw[id] = z[id] * w[id];
    total_zw += zw[id];
    total_w += w[id];
  }
  std::vector<char> in_node(data.n_samples, 0);
  for (const auto id : samples) in_node[id] = 1;

  std::vector<detail::FeatureScan> scans(data.n_features);
  parallel_for(data.n_features, threads, [&](std::int64_t f) {
    std::vector<std::int32_t> order;
    order.reserve(samples.size());
    for (const auto id : data.sort_index[f])
      if (in_node[id]) order.push_back(id);
    scans[f] = detail::scan_feature(data.columns[f], order, zw, w, total_zw, total_w);
  });

  std::optional<SplitCandidate> best;
  for (std::int32_t f = 0; f < data.n_features; ++f) {
    if (!scans[f].found) continue;
    if (!best || scans[f].gain > best->gain)
      best = SplitCandidate{f, scans[f].threshold, scans[f].gain, scans[f].left_count};
  }
  return best;
}

/// How the Newton leaf value is scaled: the plain algorithms carry the
/// (K-1)/K prefactor, the base-class-eliminated ones do not.
enum class LeafMode { kPlainLogit, kPlainMartFactor, kAbc };

/// One-step Newton value of a terminal node: prefactor * sum(z) / sum(w)
/// over the node's samples, with the denominator floored. Pass the
/// per-sample numerator terms as z (e.g. r-p) and the per-sample second
/// derivatives as w.
inline double leaf_value(std::span<const double> z, std::span<const double> w,
                         std::span<const std::int32_t> samples, LeafMode mode,
                         std::int32_t n_classes) {
  double num = 0.0, den = 0.0;
  for (const auto id : samples) {
    num += z[id];
    den += w[id];
  }
  const double prefactor =
      mode == LeafMode::kAbc ? 1.0 : (n_classes - 1.0) / static_cast<double>(n_classes);
  return prefactor * num / std::max(den, kMinChildWeight);
}

/// Tree plus the leaf each training sample landed in.
struct TreeFit {
  RegressionTree tree;
  std::vector<std::int32_t> leaf_index;
};

namespace detail {

struct NodeWork {
  std::int32_t node_id = 0;
  std::int64_t seq = 0;
  std::vector<std::int32_t> members;                  // ascending sample id
  std::vector<std::vector<std::int32_t>> order;       // [feature] feature-sorted members
  double total_zw = 0.0;
  double total_w = 0.0;
  SplitCandidate best;
  bool has_best = false;
  bool split_done = false;
};

inline void evaluate_node(NodeWork& wk, const Dataset& data, std::span<const double> zw,
                          std::span<const double> w, int threads) {
  wk.total_zw = 0.0;
  wk.total_w = 0.0;
  for (const auto id : wk.members) {
    wk.total_zw += zw[id];
    wk.total_w += w[id];
  }
  std::vector<FeatureScan> scans(data.n_features);
  parallel_for(data.n_features, threads, [&](std::int64_t f) {
    scans[f] = scan_feature(data.columns[f], wk.order[f], zw, w, wk.total_zw, wk.total_w);
  });
  wk.has_best = false;
  for (std::int32_t f = 0; f < data.n_features; ++f) {
    if (!scans[f].found) continue;
    if (!wk.has_best || scans[f].gain > wk.best.gain) {
      wk.best = SplitCandidate{f, scans[f].threshold, scans[f].gain, scans[f].left_count};
      wk.has_best = true;
    }
  }
}

}  // namespace detail

/// Grows a regression tree best-first: the leaf with the highest split gain
/// is split until the tree has n_leaves terminal nodes or no leaf has a
/// positive-gain split. Leaf values are left at 0; the caller fills them via
/// leaf_value, whose scaling is algorithm-dependent.
inline TreeFit fit_tree(std::span<const double> z, std::span<const double> w,
                        const Dataset& data, std::int32_t n_leaves, int threads = 1) {
  if (n_leaves < 2) throw std::invalid_argument("a tree needs at least 2 terminal nodes");
  const std::int32_t n = data.n_samples;

  std::vector<double> zw(n);
  for (std::int32_t i = 0; i < n; ++i) zw[i] = z[i] * w[i];

  TreeFit fit;
  fit.tree.nodes.push_back(TreeNode{});
  fit.leaf_index.assign(n, 0);

  std::deque<detail::NodeWork> works;
  works.emplace_back();
  {
    auto& root = works.back();
    root.node_id = 0;
    root.seq = 0;
    root.members.resize(n);
    std::iota(root.members.begin(), root.members.end(), 0);
    root.order = data.sort_index;
    detail::evaluate_node(root, data, zw, w, threads);
  }

  // Highest gain first; equal gains pop in creation order.
  const auto cmp = [&works](std::size_t a, std::size_t b) {
    if (works[a].best.gain != works[b].best.gain) return works[a].best.gain < works[b].best.gain;
    return works[a].seq > works[b].seq;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
  if (works[0].has_best) heap.push(0);

  std::int32_t leaves = 1;
  std::int64_t next_seq = 1;
  while (leaves < n_leaves && !heap.empty()) {
    const std::size_t idx = heap.top();
    heap.pop();
    auto& wk = works[idx];
    wk.split_done = true;

    const auto& split = wk.best;
    const auto& split_col = data.columns[split.feature];
    const std::int32_t left_id = static_cast<std::int32_t>(fit.tree.nodes.size());
    const std::int32_t right_id = left_id + 1;
    auto& parent = fit.tree.nodes[wk.node_id];
    parent.feature = split.feature;
    parent.threshold = split.threshold;
    parent.left = left_id;
    parent.right = right_id;
    fit.tree.nodes.push_back(TreeNode{});
    fit.tree.nodes.push_back(TreeNode{});

    const std::size_t li = works.size();
    works.emplace_back();
    works.emplace_back();
    auto& lw = works[li];
    auto& rw = works[li + 1];
    auto& pw = works[idx];
    lw.node_id = left_id;
    rw.node_id = right_id;
    lw.seq = next_seq++;
    rw.seq = next_seq++;

    lw.members.reserve(split.left_count);
    rw.members.reserve(pw.members.size() - split.left_count);
    for (const auto id : pw.members)
      (split_col[id] <= split.threshold ? lw.members : rw.members).push_back(id);

    lw.order.resize(data.n_features);
    rw.order.resize(data.n_features);
    for (std::int32_t f = 0; f < data.n_features; ++f) {
      lw.order[f].reserve(lw.members.size());
      rw.order[f].reserve(rw.members.size());
      for (const auto id : pw.order[f])
        (split_col[id] <= split.threshold ? lw.order[f] : rw.order[f]).push_back(id);
    }
    std::vector<std::int32_t>().swap(pw.members);
    std::vector<std::vector<std::int32_t>>().swap(pw.order);

    detail::evaluate_node(lw, data, zw, w, threads);
    detail::evaluate_node(rw, data, zw, w, threads);
    if (lw.has_best) heap.push(li);
    if (rw.has_best) heap.push(li + 1);
    ++leaves;
  }

  fit.tree.n_leaves = leaves;
  for (const auto& wk : works) {
    if (wk.split_done) continue;
    for (const auto id : wk.members) fit.leaf_index[id] = wk.node_id;
  }
  return fit;
}

/// Member lists per leaf node id, each in ascending sample order.
inline std::vector<std::vector<std::int32_t>> collect_leaf_members(const TreeFit& fit) {
  std::vector<std::vector<std::int32_t>> members(fit.tree.nodes.size());
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(fit.leaf_index.size()); ++i)
    members[fit.leaf_index[i]].push_back(i);
  return members;
}

}  // namespace gapboost
