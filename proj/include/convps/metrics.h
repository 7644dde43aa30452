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

#ifndef CONVPS_METRICS_H_
#define CONVPS_METRICS_H_

#include <span>

namespace convps {

// All take a duplicate-free ranking (best first) and a non-empty relevant
// set, and throw InvalidArgument otherwise. AP divides by |relevant|.
double AveragePrecisionAt(std::span<const int> ranking,
                          std::span<const int> relevant, int k = 100);
double ReciprocalRankAt(std::span<const int> ranking,
                        std::span<const int> relevant, int k = 100);
double NdcgAt(std::span<const int> ranking, std::span<const int> relevant,
              int k = 10);

}  // namespace convps

#endif  // CONVPS_METRICS_H_
