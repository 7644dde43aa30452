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

#include "convps/metrics.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "convps/error.h"

namespace convps {
namespace {

bool HasDuplicates(std::span<const int> ids) {
  std::vector<int> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

bool IsRelevant(std::span<const int> relevant, int item) {
  return std::find(relevant.begin(), relevant.end(), item) != relevant.end();
}

size_t Cutoff(std::span<const int> ranking, std::span<const int> relevant,
              int k) {
  if (relevant.empty()) throw InvalidArgument("empty relevant set");
  if (k < 1) throw InvalidArgument("cutoff must be >= 1");
  const size_t n = std::min(ranking.size(), static_cast<size_t>(k));
  if (HasDuplicates(ranking.first(n)) || HasDuplicates(relevant)) {
    throw InvalidArgument("ranking and relevant set must be duplicate-free");
  }
  return n;
}

}  // namespace

double AveragePrecisionAt(std::span<const int> ranking,
                          std::span<const int> relevant, int k) {
  const size_t n = Cutoff(ranking, relevant, k);
  double sum = 0.0;
  int hits = 0;
  for (size_t i = 0; i < n; ++i) {
    if (IsRelevant(relevant, ranking[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double ReciprocalRankAt(std::span<const int> ranking,
                        std::span<const int> relevant, int k) {
  const size_t n = Cutoff(ranking, relevant, k);
  for (size_t i = 0; i < n; ++i) {
    if (IsRelevant(relevant, ranking[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double NdcgAt(std::span<const int> ranking, std::span<const int> relevant,
              int k) {
  const size_t n = Cutoff(ranking, relevant, k);
  double dcg = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (IsRelevant(relevant, ranking[i])) dcg += 1.0 / std::log2(i + 2.0);
  }
  const size_t ideal_n = std::min(relevant.size(), static_cast<size_t>(k));
  double ideal = 0.0;
  for (size_t i = 0; i < ideal_n; ++i) ideal += 1.0 / std::log2(i + 2.0);
  return dcg / ideal;
}

}  // namespace convps
