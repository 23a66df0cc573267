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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gapboost/dataset.hpp"
#include "gapboost/numerics.hpp"
#include "gapboost/parallel.hpp"
#include "gapboost/tree.hpp"

namespace gapboost {

enum class Algorithm { kMart, kLogitBoost, kAbcMart, kAbcLogitBoost };

inline constexpr bool is_abc(Algorithm a) {
  return a == Algorithm::kAbcMart || a == Algorithm::kAbcLogitBoost;
}

inline constexpr bool uses_weighted_split(Algorithm a) {
  return a == Algorithm::kLogitBoost || a == Algorithm::kAbcLogitBoost;
}

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kMart: return "mart";
    case Algorithm::kLogitBoost: return "logitboost";
    case Algorithm::kAbcMart: return "abc-mart";
    case Algorithm::kAbcLogitBoost: return "abc-logitboost";
  }
  return "unknown";
}

inline std::optional<Algorithm> algorithm_from_name(std::string_view name) {
  if (name == "mart") return Algorithm::kMart;
  if (name == "logitboost") return Algorithm::kLogitBoost;
  if (name == "abc-mart") return Algorithm::kAbcMart;
  if (name == "abc-logitboost") return Algorithm::kAbcLogitBoost;
  return std::nullopt;
}

struct TrainConfig {
  Algorithm algorithm = Algorithm::kMart;
  std::int32_t n_leaves = 20;        // J, terminal nodes per tree
  double shrinkage = 0.1;            // nu
  std::int32_t n_iterations = 1000;  // M
  std::int32_t gap = 1;              // G; only consulted by the abc algorithms
  std::optional<double> early_stop_loss;
  int threads = 1;
};

/// Trees committed at one boosting iteration: K trees in class order for the
/// plain algorithms (base = -1), K-1 trees in ascending class order skipping
/// the base class for the abc algorithms.
struct Stage {
  std::int32_t base = -1;
  std::vector<RegressionTree> trees;

  bool operator==(const Stage&) const = default;
};

struct IterationMetrics {
  std::int32_t iteration = 0;
  double train_loss = 0.0;
  std::int64_t test_error = -1;  // -1 when no test set was supplied
  std::int32_t base = -1;
  std::int64_t trees_fit_cum = 0;
};

struct Ensemble {
  TrainConfig config;
  std::int32_t n_classes = 0;
  std::int32_t n_features = 0;
  std::vector<std::int64_t> label_values;
  std::vector<Stage> stages;
  std::vector<std::int32_t> base_history;  // per iteration; -1 for plain runs
  std::vector<IterationMetrics> metrics;
  /// max_i |sum_k F_{i,k}| after each iteration; tracked for abc runs only.
  std::vector<double> sum_to_zero_gap;
  std::int64_t tree_fit_count = 0;
};

enum class GapPhase { kSearch, kReuse };

/// The base class is recomputed at iteration 1 and then every G iterations;
/// in between the cached base is reused.
inline GapPhase gap_schedule(std::int32_t m, std::int32_t gap) {
  if (m < 1) throw std::invalid_argument("iterations are numbered from 1");
  if (gap < 1) throw std::invalid_argument("gap must be >= 1");
  return (m - 1) % gap == 0 ? GapPhase::kSearch : GapPhase::kReuse;
}

/// argmin over candidate losses; ties go to the lowest class index.
inline std::int32_t select_base(std::span<const double> losses) {
  std::int32_t best = 0;
  for (std::size_t b = 0; b < losses.size(); ++b) {
    if (!std::isfinite(losses[b]))
      throw std::runtime_error("non-finite candidate loss for base " + format_int(b));
    if (losses[b] < losses[best]) best = static_cast<std::int32_t>(b);
  }
  return best;
}

/// Total number of trees a run fits, including the discarded candidates of
/// the exhaustive base search. S = ceil(M/G) search iterations cost K(K-1)
/// trees each, the remaining M-S reuse iterations cost K-1; the plain
/// algorithms fit exactly K*M.
inline std::int64_t tree_fit_cost(std::int32_t n_classes, std::int32_t n_iterations,
                                  std::int32_t gap, Algorithm algorithm) {
  if (n_iterations < 0 || gap < 1) throw std::invalid_argument("invalid cost parameters");
  const std::int64_t k = n_classes;
  const std::int64_t m = n_iterations;
  if (!is_abc(algorithm)) return k * m;
  const std::int64_t searches = (m + gap - 1) / gap;
  return searches * k * (k - 1) + (m - searches) * (k - 1);
}

/// One exhaustive-search candidate: the K-1 trees fitted against base b, the
/// would-be score matrix, and the training loss it would commit to. Does not
/// touch the current state.
struct CandidatePass {
  std::int32_t base = -1;
  double loss = 0.0;
  std::vector<RegressionTree> trees;
  Matrix scores;
};

namespace detail {

/// Fits one tree on (z, w) split data and fills its leaves from the
/// (numerator, denominator) arrays. Returns the fit with finalized values.
inline TreeFit fit_valued_tree(std::span<const double> split_z, std::span<const double> split_w,
                               std::span<const double> leaf_num, std::span<const double> leaf_den,
                               const Dataset& data, std::int32_t n_leaves, LeafMode mode,
                               std::int32_t n_classes, int threads) {
  TreeFit fit = fit_tree(split_z, split_w, data, n_leaves, threads);
  const auto members = collect_leaf_members(fit);
  for (std::size_t node = 0; node < fit.tree.nodes.size(); ++node) {
    if (!fit.tree.nodes[node].is_leaf() || members[node].empty()) continue;
    fit.tree.nodes[node].value = leaf_value(leaf_num, leaf_den, members[node], mode, n_classes);
  }
  return fit;
}

struct ClassFitBuffers {
  std::vector<double> g, h, num, z, ones;

  explicit ClassFitBuffers(std::int32_t n)
      : g(n), h(n), num(n), z(n), ones(n, 1.0) {}
};

}  // namespace detail

/// Runs one full base-class candidate for base b against the current state:
/// for every k != b fits a tree on the sum-to-zero derivatives, applies
/// shrinkage, recovers the base score from the constraint, and evaluates the
/// training loss the commit would produce. Read-only with respect to state.
inline CandidatePass abc_candidate_pass(const ScoreState& state, std::int32_t base,
                                        const TrainConfig& config, const Dataset& data,
                                        int threads = 1) {
  const std::int32_t n = data.n_samples;
  const std::int32_t k_classes = data.n_classes;
  CandidatePass pass;
  pass.base = base;
  pass.scores = state.F;
  pass.trees.resize(k_classes - 1);

  std::vector<TreeFit> fits(k_classes - 1);
  const int outer = std::min<int>(std::max(threads, 1), k_classes - 1);
  const int inner = threads > k_classes - 1 ? threads / (k_classes - 1) : 1;
  parallel_for(k_classes - 1, outer, [&](std::int64_t slot) {
    const std::int32_t k = static_cast<std::int32_t>(slot) < base
                               ? static_cast<std::int32_t>(slot)
                               : static_cast<std::int32_t>(slot) + 1;
    detail::ClassFitBuffers buf(n);
    abc_derivatives(state, data.labels, k, base, buf.g, buf.h);
    for (std::int32_t i = 0; i < n; ++i) buf.num[i] = -buf.g[i];
    TreeFit fit;
    if (uses_weighted_split(config.algorithm)) {
      for (std::int32_t i = 0; i < n; ++i) buf.z[i] = buf.num[i] / buf.h[i];
      fit = detail::fit_valued_tree(buf.z, buf.h, buf.num, buf.h, data, config.n_leaves,
                                    LeafMode::kAbc, k_classes, inner);
    } else {
      fit = detail::fit_valued_tree(buf.num, buf.ones, buf.num, buf.h, data, config.n_leaves,
                                    LeafMode::kAbc, k_classes, inner);
    }
    for (std::int32_t i = 0; i < n; ++i)
      pass.scores(i, k) += config.shrinkage * fit.tree.nodes[fit.leaf_index[i]].value;
    fits[slot] = std::move(fit);
  });
  for (std::int32_t slot = 0; slot < k_classes - 1; ++slot)
    pass.trees[slot] = std::move(fits[slot].tree);

  // Base score from the sum-to-zero constraint.
  for (std::int32_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int32_t k = 0; k < k_classes; ++k)
      if (k != base) s += pass.scores(i, k);
    pass.scores(i, base) = -s;
  }

  ScoreState probe(n, k_classes);
  probe.F = pass.scores;
  softmax_update(probe);
  pass.loss = neg_log_likelihood(probe, data.labels);
  return pass;
}

namespace detail {

inline void validate_config(const TrainConfig& c) {
  if (c.n_leaves < 2) throw std::invalid_argument("J must be >= 2");
  if (!(c.shrinkage > 0.0) || c.shrinkage > 1.0)
    throw std::invalid_argument("shrinkage must be in (0, 1]");
  if (c.n_iterations < 0) throw std::invalid_argument("M must be >= 0");
  if (c.gap < 1) throw std::invalid_argument("G must be >= 1");
}

inline void validate_train_data(const Dataset& d) {
  if (d.n_samples < 1) throw std::runtime_error("empty dataset");
  if (d.n_classes < 3) throw std::runtime_error("multi-class training requires K >= 3");
  std::vector<char> seen(d.n_classes, 0);
  for (const auto l : d.labels) {
    if (l < 0 || l >= d.n_classes) throw std::runtime_error("label out of range");
    seen[l] = 1;
  }
  for (std::int32_t c = 0; c < d.n_classes; ++c)
    if (!seen[c])
      throw std::runtime_error("class " + format_int(c) + " has no training samples");
}

inline std::int32_t argmax_row(std::span<const double> row) {
  std::int32_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = static_cast<std::int32_t>(k);
  return best;
}

inline std::int64_t count_test_errors(const Matrix& scores, std::span<const std::int32_t> labels) {
  std::int64_t errors = 0;
  for (std::int32_t i = 0; i < scores.rows(); ++i)
    if (argmax_row(scores.row(i)) != labels[i]) ++errors;
  return errors;
}

inline double max_abs_row_sum(const Matrix& m) {
  double worst = 0.0;
  for (std::int32_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::int32_t k = 0; k < m.cols(); ++k) s += m(i, k);
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

/// Applies one committed stage to a score matrix over another dataset,
/// replaying the same update the training loop performed: additive updates
/// for every fitted class, then the base column from the sum-to-zero
/// constraint for abc stages.
inline void apply_stage(const Stage& stage, double shrinkage, const Dataset& d, Matrix& scores) {
  const std::int32_t k_classes = scores.cols();
  if (stage.base < 0) {
    for (std::int32_t k = 0; k < k_classes; ++k)
      for (std::int32_t i = 0; i < d.n_samples; ++i)
        scores(i, k) += shrinkage * stage.trees[k].predict_at(d, i);
    return;
  }
  std::int32_t slot = 0;
  for (std::int32_t k = 0; k < k_classes; ++k) {
    if (k == stage.base) continue;
    for (std::int32_t i = 0; i < d.n_samples; ++i)
      scores(i, k) += shrinkage * stage.trees[slot].predict_at(d, i);
    ++slot;
  }
  for (std::int32_t i = 0; i < d.n_samples; ++i) {
    double s = 0.0;
    for (std::int32_t k = 0; k < k_classes; ++k)
      if (k != stage.base) s += scores(i, k);
    scores(i, stage.base) = -s;
  }
}

}  // namespace detail

/// Trains an ensemble. Every iteration fits the per-class (plain) or
/// per-base-candidate (abc) trees against the committed probabilities, then
/// refreshes them once. Per-iteration train loss, and test errors when a
/// test set is supplied, are recorded for every iteration.
inline Ensemble train(const TrainConfig& config, const Dataset& data,
                      const Dataset* test = nullptr, ScoreState* final_state = nullptr) {
  detail::validate_config(config);
  detail::validate_train_data(data);
  if (test != nullptr) {
    if (test->n_features != data.n_features)
      throw std::runtime_error("test set has " + format_int(test->n_features) +
                               " features, train set has " + format_int(data.n_features));
    for (const auto l : test->labels)
      if (l < 0 || l >= data.n_classes) throw std::runtime_error("test label out of range");
  }

  const std::int32_t n = data.n_samples;
  const std::int32_t k_classes = data.n_classes;
  const bool abc = is_abc(config.algorithm);
  const int threads = std::max(config.threads, 1);

  Ensemble ens;
  ens.config = config;
  ens.n_classes = k_classes;
  ens.n_features = data.n_features;
  ens.label_values = data.label_values;

  ScoreState state(n, k_classes);
  softmax_update(state);
  Matrix test_scores;
  if (test != nullptr) test_scores = Matrix(test->n_samples, k_classes, 0.0);

  std::int64_t trees_cum = 0;
  std::int32_t cached_base = -1;

  for (std::int32_t m = 1; m <= config.n_iterations; ++m) {
    Stage stage;
    if (!abc) {
      std::vector<TreeFit> fits(k_classes);
      const int outer = std::min<int>(threads, k_classes);
      const int inner = threads > k_classes ? threads / k_classes : 1;
      const LeafMode mode = uses_weighted_split(config.algorithm) ? LeafMode::kPlainLogit
                                                                  : LeafMode::kPlainMartFactor;
      parallel_for(k_classes, outer, [&](std::int64_t k) {
        detail::ClassFitBuffers buf(n);
        plain_derivatives(state, data.labels, static_cast<std::int32_t>(k), buf.g, buf.h);
        for (std::int32_t i = 0; i < n; ++i) buf.num[i] = -buf.g[i];
        if (uses_weighted_split(config.algorithm)) {
          for (std::int32_t i = 0; i < n; ++i) buf.z[i] = buf.num[i] / buf.h[i];
          fits[k] = detail::fit_valued_tree(buf.z, buf.h, buf.num, buf.h, data, config.n_leaves,
                                            mode, k_classes, inner);
        } else {
          fits[k] = detail::fit_valued_tree(buf.num, buf.ones, buf.num, buf.h, data,
                                            config.n_leaves, mode, k_classes, inner);
        }
      });
      for (std::int32_t i = 0; i < n; ++i)
        for (std::int32_t k = 0; k < k_classes; ++k)
          state.F(i, k) +=
              config.shrinkage * fits[k].tree.nodes[fits[k].leaf_index[i]].value;
      stage.base = -1;
      stage.trees.reserve(k_classes);
      for (auto& f : fits) stage.trees.push_back(std::move(f.tree));
      trees_cum += k_classes;
    } else {
      std::int32_t base;
      CandidatePass chosen;
      if (gap_schedule(m, config.gap) == GapPhase::kSearch) {
        std::vector<CandidatePass> passes(k_classes);
        const int outer = std::min<int>(threads, k_classes);
        const int inner = threads > k_classes ? threads / k_classes : 1;
        parallel_for(k_classes, outer, [&](std::int64_t b) {
          passes[b] =
              abc_candidate_pass(state, static_cast<std::int32_t>(b), config, data, inner);
        });
        std::vector<double> losses(k_classes);
        for (std::int32_t b = 0; b < k_classes; ++b) losses[b] = passes[b].loss;
        base = select_base(losses);
        chosen = std::move(passes[base]);
        trees_cum += static_cast<std::int64_t>(k_classes) * (k_classes - 1);
      } else {
        base = cached_base;
        chosen = abc_candidate_pass(state, base, config, data, threads);
        trees_cum += k_classes - 1;
      }
      state.F = std::move(chosen.scores);
      cached_base = base;
      stage.base = base;
      stage.trees = std::move(chosen.trees);
    }

    softmax_update(state);
    const double loss = neg_log_likelihood(state, data.labels);
    if (!std::isfinite(loss))
      throw std::runtime_error("iteration " + format_int(m) + ": non-finite training loss");

    if (test != nullptr) detail::apply_stage(stage, config.shrinkage, *test, test_scores);

    IterationMetrics im;
    im.iteration = m;
    im.train_loss = loss;
    im.base = stage.base;
    im.trees_fit_cum = trees_cum;
    if (test != nullptr) im.test_error = detail::count_test_errors(test_scores, test->labels);
    ens.metrics.push_back(im);
    ens.base_history.push_back(stage.base);
    if (abc) ens.sum_to_zero_gap.push_back(detail::max_abs_row_sum(state.F));
    ens.stages.push_back(std::move(stage));

    if (config.early_stop_loss && loss < *config.early_stop_loss) break;
  }

  ens.tree_fit_count = trees_cum;
  if (final_state != nullptr) *final_state = std::move(state);
  return ens;
}

struct Prediction {
  std::vector<double> scores;
  std::vector<double> probabilities;
  std::int32_t predicted = 0;
};

/// Accumulates the shrunken tree outputs stage by stage, replaying the base
/// column recovery for abc stages, then applies the softmax. Ties in the
/// argmax go to the lowest class index. up_to_m truncates the ensemble.
inline Prediction predict(const Ensemble& ens, std::span<const double> x,
                          std::optional<std::int32_t> up_to_m = std::nullopt) {
  if (static_cast<std::int32_t>(x.size()) < ens.n_features)
    throw std::invalid_argument("feature vector shorter than model dimensionality");
  std::int32_t stop = static_cast<std::int32_t>(ens.stages.size());
  if (up_to_m) stop = std::clamp(*up_to_m, 0, stop);

  Prediction out;
  out.scores.assign(ens.n_classes, 0.0);
  for (std::int32_t s = 0; s < stop; ++s) {
    const Stage& stage = ens.stages[s];
    if (stage.base < 0) {
      for (std::int32_t k = 0; k < ens.n_classes; ++k)
        out.scores[k] += ens.config.shrinkage * stage.trees[k].predict(x);
    } else {
      std::int32_t slot = 0;
      for (std::int32_t k = 0; k < ens.n_classes; ++k) {
        if (k == stage.base) continue;
        out.scores[k] += ens.config.shrinkage * stage.trees[slot++].predict(x);
      }
      double sum = 0.0;
      for (std::int32_t k = 0; k < ens.n_classes; ++k)
        if (k != stage.base) sum += out.scores[k];
      out.scores[stage.base] = -sum;
    }
  }
  out.probabilities.assign(ens.n_classes, 0.0);
  softmax_row(out.scores, out.probabilities);
  out.predicted = detail::argmax_row(out.scores);
  return out;
}

}  // namespace gapboost
