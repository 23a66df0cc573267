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

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gapboost/common.hpp"

namespace gapboost {

/// Probabilities are kept strictly inside (0, 1): after the softmax they are
/// clamped to [kProbFloor, 1 - kProbFloor] and the row is renormalized, so a
/// log of exact 0 or 1 can never occur no matter how far training converges.
inline constexpr double kProbFloor = 1e-15;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int32_t rows, std::int32_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols),
        v_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  std::int32_t rows() const { return rows_; }
  std::int32_t cols() const { return cols_; }

  double& operator()(std::int32_t i, std::int32_t j) {
    return v_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(std::int32_t i, std::int32_t j) const {
    return v_[static_cast<std::size_t>(i) * cols_ + j];
  }

  std::span<double> row(std::int32_t i) {
    return {v_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(std::int32_t i) const {
    return {v_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::int32_t rows_ = 0;
  std::int32_t cols_ = 0;
  std::vector<double> v_;
};

/// Per-sample scores F and the matching probabilities p. p is always the
/// (guarded) softmax of the current F; refresh it with softmax_update after
/// mutating F.
struct ScoreState {
  Matrix F;
  Matrix p;

  ScoreState() = default;
  ScoreState(std::int32_t n_samples, std::int32_t n_classes)
      : F(n_samples, n_classes, 0.0), p(n_samples, n_classes, 0.0) {}

  std::int32_t n_samples() const { return F.rows(); }
  std::int32_t n_classes() const { return F.cols(); }
};

/// Guarded softmax of one score row: max subtraction, clamp, renormalize.
inline void softmax_row(std::span<const double> scores, std::span<double> probs) {
  double mx = scores[0];
  for (const double s : scores) {
    if (!std::isfinite(s)) throw std::runtime_error("non-finite score in softmax");
    if (s > mx) mx = s;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double e = std::exp(scores[k] - mx);
    probs[k] = e;
    sum += e;
  }
  double renorm = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    double q = probs[k] / sum;
    if (q < kProbFloor) q = kProbFloor;
    if (q > 1.0 - kProbFloor) q = 1.0 - kProbFloor;
    probs[k] = q;
    renorm += q;
  }
  for (std::size_t k = 0; k < scores.size(); ++k) probs[k] /= renorm;
}

inline void softmax_update(ScoreState& state) {
  for (std::int32_t i = 0; i < state.n_samples(); ++i) softmax_row(state.F.row(i), state.p.row(i));
}

/// Total negative log-likelihood of the labels under the current p.
inline double neg_log_likelihood(const ScoreState& state, std::span<const std::int32_t> labels) {
  double loss = 0.0;
  for (std::int32_t i = 0; i < state.n_samples(); ++i) loss -= std::log(state.p(i, labels[i]));
  return loss;
}

/// First and second loss derivatives with respect to F_{i,k} under the
/// diagonal approximation: g_i = p_{i,k} - r_{i,k}, h_i = p_{i,k}(1-p_{i,k}).
inline void plain_derivatives(const ScoreState& state, std::span<const std::int32_t> labels,
                              std::int32_t k, std::span<double> g, std::span<double> h) {
  for (std::int32_t i = 0; i < state.n_samples(); ++i) {
    const double p = state.p(i, k);
    const double r = labels[i] == k ? 1.0 : 0.0;
    g[i] = p - r;
    h[i] = p * (1.0 - p);
  }
}

/// Derivatives with respect to F_{i,k} once class b is eliminated through the
/// sum-to-zero constraint:
///   g_i = (r_{i,b} - p_{i,b}) - (r_{i,k} - p_{i,k})
///   h_i = p_{i,b}(1-p_{i,b}) + p_{i,k}(1-p_{i,k}) + 2 p_{i,b} p_{i,k}
inline void abc_derivatives(const ScoreState& state, std::span<const std::int32_t> labels,
                            std::int32_t k, std::int32_t b, std::span<double> g,
                            std::span<double> h) {
  if (k == b) throw std::invalid_argument("target class equals base class");
  for (std::int32_t i = 0; i < state.n_samples(); ++i) {
    const double pb = state.p(i, b);
    const double pk = state.p(i, k);
    const double rb = labels[i] == b ? 1.0 : 0.0;
    const double rk = labels[i] == k ? 1.0 : 0.0;
    g[i] = (rb - pb) - (rk - pk);
    h[i] = pb * (1.0 - pb) + pk * (1.0 - pk) + 2.0 * pb * pk;
  }
}

/// Determinant of the 2x2 constrained Hessian for K=3 with base class b.
/// Diagnostic only: its value is independent of b, which is the property the
/// test suite verifies.
inline double hessian_det_k3(const std::array<double, 3>& p, std::int32_t b) {
  if (b < 0 || b > 2) throw std::invalid_argument("base class must be 0, 1 or 2");
  const double sum = p[0] + p[1] + p[2];
  if (std::abs(sum - 1.0) > 1e-9 || p[0] < -1e-9 || p[1] < -1e-9 || p[2] < -1e-9)
    throw std::invalid_argument("probability vector off the simplex");
  const std::int32_t u = b == 0 ? 1 : 0;
  const std::int32_t v = b == 2 ? 1 : 2;
  const double pb = p[b], pu = p[u], pv = p[v];
  const double huu = pb * (1.0 - pb) + pu * (1.0 - pu) + 2.0 * pb * pu;
  const double hvv = pb * (1.0 - pb) + pv * (1.0 - pv) + 2.0 * pb * pv;
  const double huv = pb - pb * pb + pb * pu + pb * pv - pu * pv;
  return huu * hvv - huv * huv;
}

}  // namespace gapboost
