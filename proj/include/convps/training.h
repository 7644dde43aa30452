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

#ifndef CONVPS_TRAINING_H_
#define CONVPS_TRAINING_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "convps/corpus.h"
#include "convps/model.h"

namespace convps {

using Rng = std::mt19937_64;

struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double lr0 = 0.5;
  double clip_norm = 5.0;
  int neg_samples = 5;          // alpha
  double l2_gamma = 0.005;      // gamma
  double subsample_t = 1e-5;
  int max_neg_slots = 5;        // negative slots per interaction, cap
  int dim = 200;
  uint64_t seed = 1;

  void Validate() const;  // throws InvalidArgument
};

// Unigram^0.75 negative-sampling distribution over dense ids.
class SamplingTable {
 public:
  SamplingTable() = default;
  // Throws InvalidArgument on empty or non-positive counts.
  static SamplingTable FromCounts(std::span<const int64_t> counts);

  int size() const { return static_cast<int>(prob_.size()); }
  bool empty() const { return prob_.empty(); }
  double Probability(int id) const { return prob_[id]; }
  int Sample(Rng& rng) const;

 private:
  std::vector<double> prob_;
  std::vector<double> cdf_;
};

struct SamplingTables {
  SamplingTable words;  // P_w
  SamplingTable pairs;  // P_c
  int num_items = 0;    // P_v is uniform over items

  static SamplingTables ForCorpus(const Corpus& corpus);
};

enum class ExampleKind {
  kWordFromItem,
  kWordFromUser,
  kPairFromItem,
  kPairFromUser,
  kItemGivenUserQuery,
  kItemGivenUserQueryConv,
};

inline constexpr ExampleKind kAllExampleKinds[] = {
    ExampleKind::kWordFromItem,       ExampleKind::kWordFromUser,
    ExampleKind::kPairFromItem,       ExampleKind::kPairFromUser,
    ExampleKind::kItemGivenUserQuery, ExampleKind::kItemGivenUserQueryConv};

const char* ExampleKindName(ExampleKind kind);

// One log-likelihood term. Fields not used by `kind` stay -1 / empty:
//   word_from_*      item|user, word
//   pair_from_*      item|user, pair
//   item_given_uQ    user, query_words, item
//   item_given_uQc   user, query_words, item, and pair (positive) or
//                    slot (negative)
struct TrainingExample {
  ExampleKind kind = ExampleKind::kItemGivenUserQuery;
  int user = -1;
  int item = -1;
  int word = -1;
  int pair = -1;
  int slot = -1;
  int query = -1;  // corpus query index, used to share Q within a batch
  std::span<const int> query_words;
  ConversationVector::Polarity polarity =
      ConversationVector::Polarity::kPositive;
};

enum class Table { kUser, kItem, kWord, kSlotPos, kSlotNeg, kValue };
inline constexpr int kNumTables = 6;

// Sparse gradient: touched embedding rows plus dense projection terms.
class Gradients {
 public:
  explicit Gradients(int dim);

  // Zero-initialized on first touch. References stay valid until Clear().
  Vector& Row(Table table, int row);
  const Vector* FindRow(Table table, int row) const;
  Matrix& proj_weight();
  Vector& proj_bias();
  bool has_projection() const { return has_projection_; }

  // Rows of `table` in first-touch order.
  const std::vector<int>& touched(Table table) const {
    return tables_[static_cast<int>(table)].rows;
  }

  double SquaredNorm() const;
  void Scale(double factor);
  void Clear();
  // params -= lr * gradient
  void ApplyTo(ModelParams& params, double lr) const;
  int dim() const { return dim_; }

 private:
  struct TableGrad {
    std::unordered_map<int, size_t> index;
    std::vector<int> rows;
    std::deque<Vector> values;
  };
  int dim_;
  TableGrad tables_[kNumTables];
  bool has_projection_ = false;
  Matrix proj_weight_;
  Vector proj_bias_;
};

Matrix& TableOf(ModelParams& params, Table table);
const Matrix& TableOf(const ModelParams& params, Table table);

// Read-only inputs shared by every example.
struct LossContext {
  const ModelParams& params;
  std::span<const SlotValuePair> pairs;  // vocabulary pair table
  LambdaWeights lambdas;
};

// Draws alpha negatives from the table that matches the example kind: items
// for item_given_*, words for word_from_*, pairs for pair_from_*.
std::vector<int> SampleNegatives(const TrainingExample& example,
                                 const SamplingTables& tables, int alpha,
                                 Rng& rng);

// -[log s(s+) + sum_k log s(-s-_k)] with the given negatives, accumulating
// d(loss)/d(params) into `grads` (not cleared first).
double ExampleLossAndGrads(const TrainingExample& example,
                           std::span<const int> negatives,
                           const LossContext& ctx, Gradients& grads);
// Loss only.
double ExampleLoss(const TrainingExample& example,
                   std::span<const int> negatives, const LossContext& ctx);

struct NsResult {
  double loss = 0.0;
  Gradients grads;
  std::vector<int> negatives;
};
NsResult NsLossAndGrads(const TrainingExample& example, const LossContext& ctx,
                        const SamplingTables& tables, int alpha, Rng& rng);

double LrAt(int64_t step, int64_t total_steps, double lr0);

// Scales every entry by clip_norm / ||g|| when ||g|| > clip_norm. Returns the
// norm before clipping.
double ClipGlobal(Gradients& grads, double clip_norm);

// Examples for one pass over the training interactions, word terms thinned
// by subsampling, in corpus order (unshuffled).
std::vector<TrainingExample> BuildEpochExamples(const Corpus& corpus,
                                                const TrainConfig& config,
                                                Rng& rng);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  int64_t examples = 0;
  double wall_ms = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mean-over-batch SGD on the negative-sampling objective with L2 on touched
// embedding rows, global-norm clipping and linear learning-rate decay.
// Deterministic for a fixed config.seed.
ModelParams Train(const Corpus& corpus, const TrainConfig& config,
                  const LambdaWeights& lambdas,
                  const EpochCallback& on_epoch = {});

// Same, continuing from existing parameters.
void TrainFrom(ModelParams& params, const Corpus& corpus,
               const TrainConfig& config, const LambdaWeights& lambdas,
               const EpochCallback& on_epoch = {});

}  // namespace convps

#endif  // CONVPS_TRAINING_H_
