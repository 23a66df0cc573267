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

#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace gapboost {

/// 0 means "use the hardware concurrency".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n). Work is statically strided across workers,
/// so each index runs the same arithmetic regardless of the thread count;
/// results must be written to per-index slots by the caller.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = threads < 1 ? 1 : static_cast<int>(std::min<std::int64_t>(threads, n));
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::int64_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace gapboost
