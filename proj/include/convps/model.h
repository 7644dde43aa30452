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

#ifndef CONVPS_MODEL_H_
#define CONVPS_MODEL_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace convps {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kNoUser = -1;

struct ModelShape {
  int dim = 200;
  int num_users = 0;
  int num_items = 0;
  int num_words = 0;
  int num_slots = 0;
  int num_values = 0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Every trainable tensor. Rows are embeddings; row-major so a row is
// contiguous.
struct ModelParams {
  Matrix user_emb;      // M x t
  Matrix item_emb;      // N x t
  Matrix word_emb;      // |D_w| x t
  Matrix slot_pos_emb;  // F x t, slot embedding under positive feedback
  Matrix slot_neg_emb;  // F x t, slot embedding under negative feedback
  Matrix value_emb;     // |A| x t
  Matrix proj_weight;   // t x t
  Vector proj_bias;     // t

  int dim() const { return static_cast<int>(proj_bias.size()); }
  ModelShape shape() const;
  bool AllFinite() const;
  double SquaredNorm() const;

  static ModelParams Zeros(const ModelShape& shape);
  // Embeddings uniform in [-0.5/t, 0.5/t], projection identity plus
  // uniform[-0.01, 0.01], bias zero.
  static ModelParams Initialize(const ModelShape& shape, uint64_t seed);
};

struct LambdaWeights {
  double user = 1.0;
  double query = 1.0;
  double conv = 1.0;

  void Validate() const;  // non-negative, not all zero
};

struct ConversationVector {
  enum class Polarity { kPositive, kNegative };

  Vector vec;
  Polarity polarity = Polarity::kPositive;
  int slot = -1;
  int value = -1;  // -1 for negative feedback
};

// (q + a) / 2 for a slot answered with a value.
ConversationVector ComposePositive(int slot, int value,
                                   const ModelParams& params);
// q⁻ of a slot the user marked as not relevant.
ConversationVector ComposeNegative(int slot, const ModelParams& params);

// tanh(W * mean(word embeddings) + b). Ids outside the word table are
// dropped before averaging; throws InvalidArgument when none remain.
Vector ProjectQuery(std::span<const int> word_ids, const ModelParams& params);

Vector SumConversation(std::span<const ConversationVector> conv, int dim);

// lambda_u * u + lambda_Q * Q + lambda_c * sum(c). `user` may be kNoUser.
Vector ContextVector(int user, const Vector& query_vec, const Vector& conv_sum,
                     const LambdaWeights& lambdas, const ModelParams& params);

// Softmax exponent v . (lambda_u u + lambda_Q Q + lambda_c sum c).
double ScoreItem(int user, const Vector& query_vec,
                 std::span<const ConversationVector> conv, int item,
                 const LambdaWeights& lambdas, const ModelParams& params);

struct ScoredItem {
  int item = -1;
  double score = 0.0;
};

// Items by descending score, ties by ascending item id. `top_k` is clamped to
// the number of items; pass 0 or less for a full ranking.
std::vector<ScoredItem> RankItems(int user, const Vector& query_vec,
                                  std::span<const ConversationVector> conv,
                                  const LambdaWeights& lambdas,
                                  const ModelParams& params, int top_k);
std::vector<ScoredItem> RankByContext(const Vector& context,
                                      const ModelParams& params, int top_k);

}  // namespace convps

#endif  // CONVPS_MODEL_H_
