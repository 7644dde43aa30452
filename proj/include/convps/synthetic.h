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

#ifndef CONVPS_SYNTHETIC_H_
#define CONVPS_SYNTHETIC_H_

#include <cstdint>

#include "convps/corpus.h"

namespace convps {

// Shape of a generated corpus. `structure_strength` is the probability that
// a token, an annotation, or a purchase follows the planted query/user
// structure instead of background noise; at 0 the annotations carry no
// information about the queries.
struct SyntheticConfig {
  int num_users = 2000;
  int num_items = 500;
  int num_queries = 20;
  int num_slots = 60;
  int num_values = 600;
  int vocab_size = 2000;
  int tokens_per_item = 40;
  int tokens_per_user = 30;
  int pairs_per_item = 6;
  int interactions_per_user = 5;
  double structure_strength = 0.8;
  double test_fraction = 0.2;
  uint64_t seed = 1;

  void Validate() const;  // throws InvalidArgument
};

CorpusRecords GenerateSyntheticRecords(const SyntheticConfig& config);

inline Corpus GenerateSynthetic(const SyntheticConfig& config,
                                const CorpusOptions& options = {}) {
  return Corpus::Build(GenerateSyntheticRecords(config), options);
}

}  // namespace convps

#endif  // CONVPS_SYNTHETIC_H_
