/*
 * Copyright 2026 The ConvPS Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CONVPS_EVAL_H_
#define CONVPS_EVAL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "convps/ask.h"
#include "convps/dialogue.h"

namespace convps {

struct MetricsRow {
  std::string strategy;
  int L = 0;
  std::string seed;  // decimal seed, or "mean" for the aggregate row
  double map = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double pos_pct = 0.0;
  double neg_pct = 0.0;
  double invalid_pct = 0.0;
  int n_pairs = 0;
};

inline constexpr int kMapCutoff = 100;
inline constexpr int kMrrCutoff = 100;
inline constexpr int kNdcgCutoff = 10;

// Rows for L = 0..l_max. Every relevant item of a test pair is simulated once
// as the target; per-target values are averaged within the pair and pairs
// are macro-averaged. Feedback percentages count answered rounds 1..L over all
// sessions (all zero at L = 0). Throws FailedPrecondition without test pairs.
std::vector<MetricsRow> Evaluate(const SearchContext& ctx,
                                 StrategyKind strategy, int l_max,
                                 uint64_t seed);

// For each strategy and L: one row per seed followed by a "mean" row.
std::vector<MetricsRow> Sweep(const SearchContext& ctx,
                              const std::vector<StrategyKind>& strategies,
                              const std::vector<int>& ls,
                              const std::vector<uint64_t>& seeds);

inline constexpr const char* kCsvHeader =
    "strategy,L,seed,map,mrr,ndcg,pos_pct,neg_pct,invalid_pct,n_pairs";
std::string MetricsCsv(const std::vector<MetricsRow>& rows);

}  // namespace convps

#endif  // CONVPS_EVAL_H_
