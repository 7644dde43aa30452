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

#ifndef CONVPS_ASK_H_
#define CONVPS_ASK_H_

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convps/corpus.h"
#include "convps/model.h"

namespace convps {

enum class StrategyKind { kRandom, kGbs, kLinRel, kGpUcb, kGpEi };

inline constexpr std::array<std::string_view, 5> kStrategyNames = {
    "random", "gbs", "linrel", "gp-ucb", "gp-ei"};

std::string_view StrategyName(StrategyKind kind);
// Throws InvalidArgument listing the valid names.
StrategyKind ParseStrategy(std::string_view name);

struct StrategyConfig {
  double c = 4.0;            // LinRel exploration weight
  double beta = 2.0;         // UCB exploration weight
  double lambda_i = 0.1;     // LinRel ridge
  double kernel_sigma2 = 1.0;
  double noise_sigma2 = 1.0;
  int gp_init_t0 = 2;        // GBS picks before the GP takes over
  uint64_t seed = 1;

  void Validate() const;
};

// Slots and their F x N item-occurrence rows. Immutable once built.
class QuestionPool {
 public:
  QuestionPool() = default;
  // `occurrence` must be binary with a 1 in every row.
  QuestionPool(std::vector<std::string> slot_names, Matrix occurrence);
  static QuestionPool FromCorpus(const Corpus& corpus);

  int num_slots() const { return static_cast<int>(slot_names_.size()); }
  int num_items() const { return static_cast<int>(occurrence_.cols()); }
  const std::string& slot_name(int slot) const { return slot_names_[slot]; }
  const Matrix& occurrence() const { return occurrence_; }
  // Items annotated with `slot`, ascending.
  const std::vector<int>& items_with(int slot) const { return items_with_[slot]; }
  // x_i . x_j, i.e. the number of items carrying both slots.
  double Overlap(int i, int j) const { return gram_(i, j); }
  double SquaredDistance(int i, int j) const;

 private:
  std::vector<std::string> slot_names_;
  Matrix occurrence_;
  Matrix gram_;
  std::vector<std::vector<int>> items_with_;
};

struct AskedSlot {
  int slot = -1;
  int y = 0;  // +1 or -1
};

class AskState {
 public:
  AskState() = default;
  AskState(StrategyKind kind, int num_slots, uint64_t seed);

  StrategyKind kind() const { return kind_; }
  const std::vector<AskedSlot>& asked() const { return asked_; }
  const std::vector<bool>& excluded() const { return excluded_; }
  bool IsExcluded(int slot) const { return excluded_.at(slot); }
  int num_available() const { return available_; }
  // Throws FailedPrecondition when `slot` was already excluded.
  void Record(int slot, int y);
  std::mt19937_64& rng() { return rng_; }

 private:
  StrategyKind kind_ = StrategyKind::kGbs;
  std::vector<AskedSlot> asked_;
  std::vector<bool> excluded_;
  int available_ = 0;
  std::mt19937_64 rng_;
};

// pi(v) = 1 / (position + 1) over a full ranking of num_items items.
std::vector<double> PreferenceVector(std::span<const int> ranked_items,
                                     int num_items);

// Selection helpers shared by every strategy. Scores closer than the
// tolerance count as tied and the lower slot id wins.
inline constexpr double kTieTolerance = 1e-12;
int ArgmaxWithTies(std::span<const double> scores,
                   const std::vector<bool>& excluded);
int ArgminWithTies(std::span<const double> scores,
                   const std::vector<bool>& excluded);

// |sum_v (2 [q in v] - 1) pi(v)| for every slot.
std::vector<double> GbsObjectives(std::span<const double> pi,
                                  const QuestionPool& pool);
int GbsSelect(std::span<const double> pi, const QuestionPool& pool,
              const std::vector<bool>& excluded);

// h_q . r + (c/2) ||h_q|| for every slot, with X the asked rows.
std::vector<double> LinRelScores(const QuestionPool& pool,
                                 std::span<const AskedSlot> asked,
                                 const StrategyConfig& config);
int LinRelSelect(const QuestionPool& pool, std::span<const AskedSlot> asked,
                 const StrategyConfig& config,
                 const std::vector<bool>& excluded);

double RbfKernel(std::span<const double> a, std::span<const double> b,
                 double sigma2);

struct GpMoments {
  double mean = 0.0;
  double variance = 0.0;
};
// Posterior for every slot given the asked slots as observations.
std::vector<GpMoments> GpPosterior(const QuestionPool& pool,
                                   std::span<const AskedSlot> observed,
                                   const StrategyConfig& config);

double ExpectedImprovement(double mean, double stddev, double best_mean);
std::vector<double> UcbScores(std::span<const GpMoments> moments, double beta);
// best mean taken over non-excluded slots.
std::vector<double> EiScores(std::span<const GpMoments> moments,
                             const std::vector<bool>& excluded);
int UcbSelect(const QuestionPool& pool, std::span<const AskedSlot> observed,
              const StrategyConfig& config, const std::vector<bool>& excluded);
int EiSelect(const QuestionPool& pool, std::span<const AskedSlot> observed,
             const StrategyConfig& config, const std::vector<bool>& excluded);

// Dispatches on state.kind(). `pi` is the preference vector of the current
// ranking. Throws FailedPrecondition when no slot is left.
int NextQuestion(AskState& state, const QuestionPool& pool,
                 std::span<const double> pi, const StrategyConfig& config);

}  // namespace convps

#endif  // CONVPS_ASK_H_
