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

#include "convps/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "convps/error.h"

namespace convps {
namespace {

void CheckRow(const Matrix& table, int row, const char* what) {
  if (row < 0 || row >= table.rows()) {
    throw NotFound(std::string("unknown ") + what + " id " +
                   std::to_string(row));
  }
}

void FillUniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace

ModelShape ModelParams::shape() const {
  return {dim(),
          static_cast<int>(user_emb.rows()),
          static_cast<int>(item_emb.rows()),
          static_cast<int>(word_emb.rows()),
          static_cast<int>(slot_pos_emb.rows()),
          static_cast<int>(value_emb.rows())};
}

bool ModelParams::AllFinite() const {
  return user_emb.allFinite() && item_emb.allFinite() &&
         word_emb.allFinite() && slot_pos_emb.allFinite() &&
         slot_neg_emb.allFinite() && value_emb.allFinite() &&
         proj_weight.allFinite() && proj_bias.allFinite();
}

double ModelParams::SquaredNorm() const {
  return user_emb.squaredNorm() + item_emb.squaredNorm() +
         word_emb.squaredNorm() + slot_pos_emb.squaredNorm() +
         slot_neg_emb.squaredNorm() + value_emb.squaredNorm() +
         proj_weight.squaredNorm() + proj_bias.squaredNorm();
}

ModelParams ModelParams::Zeros(const ModelShape& shape) {
  if (shape.dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  const int t = shape.dim;
  ModelParams p;
  p.user_emb = Matrix::Zero(shape.num_users, t);
  p.item_emb = Matrix::Zero(shape.num_items, t);
  p.word_emb = Matrix::Zero(shape.num_words, t);
  p.slot_pos_emb = Matrix::Zero(shape.num_slots, t);
  p.slot_neg_emb = Matrix::Zero(shape.num_slots, t);
  p.value_emb = Matrix::Zero(shape.num_values, t);
  p.proj_weight = Matrix::Zero(t, t);
  p.proj_bias = Vector::Zero(t);
  return p;
}

ModelParams ModelParams::Initialize(const ModelShape& shape, uint64_t seed) {
  ModelParams p = Zeros(shape);
  std::mt19937_64 rng(seed);
  const double bound = 0.5 / shape.dim;
  FillUniform(p.user_emb, bound, rng);
  FillUniform(p.item_emb, bound, rng);
  FillUniform(p.word_emb, bound, rng);
  FillUniform(p.slot_pos_emb, bound, rng);
  FillUniform(p.slot_neg_emb, bound, rng);
  FillUniform(p.value_emb, bound, rng);
  FillUniform(p.proj_weight, 0.01, rng);
  p.proj_weight.diagonal().array() += 1.0;
  return p;
}

void LambdaWeights::Validate() const {
  if (user < 0 || query < 0 || conv < 0) {
    throw InvalidArgument("lambda weights must be non-negative");
  }
  if (user == 0 && query == 0 && conv == 0) {
    throw InvalidArgument("lambda weights cannot all be zero");
  }
}

ConversationVector ComposePositive(int slot, int value,
                                   const ModelParams& params) {
  CheckRow(params.slot_pos_emb, slot, "slot");
  CheckRow(params.value_emb, value, "value");
  ConversationVector c;
  c.vec = 0.5 * (params.slot_pos_emb.row(slot) + params.value_emb.row(value))
                    .transpose();
  c.polarity = ConversationVector::Polarity::kPositive;
  c.slot = slot;
  c.value = value;
  return c;
}

ConversationVector ComposeNegative(int slot, const ModelParams& params) {
  CheckRow(params.slot_neg_emb, slot, "slot");
  ConversationVector c;
  c.vec = params.slot_neg_emb.row(slot).transpose();
  c.polarity = ConversationVector::Polarity::kNegative;
  c.slot = slot;
  return c;
}

Vector ProjectQuery(std::span<const int> word_ids, const ModelParams& params) {
  Vector mean = Vector::Zero(params.dim());
  int used = 0;
  for (int w : word_ids) {
    if (w < 0 || w >= params.word_emb.rows()) continue;
    mean += params.word_emb.row(w).transpose();
    ++used;
  }
  if (used == 0) throw InvalidArgument("query has no known words");
  mean /= used;
  return (params.proj_weight * mean + params.proj_bias).array().tanh();
}

Vector SumConversation(std::span<const ConversationVector> conv, int dim) {
  Vector sum = Vector::Zero(dim);
  for (const auto& c : conv) sum += c.vec;
  return sum;
}

Vector ContextVector(int user, const Vector& query_vec, const Vector& conv_sum,
                     const LambdaWeights& lambdas, const ModelParams& params) {
  Vector ctx = lambdas.query * query_vec + lambdas.conv * conv_sum;
  if (user != kNoUser) {
    CheckRow(params.user_emb, user, "user");
    ctx += lambdas.user * params.user_emb.row(user).transpose();
  }
  return ctx;
}

double ScoreItem(int user, const Vector& query_vec,
                 std::span<const ConversationVector> conv, int item,
                 const LambdaWeights& lambdas, const ModelParams& params) {
  CheckRow(params.item_emb, item, "item");
  const Vector ctx = ContextVector(
      user, query_vec, SumConversation(conv, params.dim()), lambdas, params);
  return params.item_emb.row(item).dot(ctx);
}

std::vector<ScoredItem> RankByContext(const Vector& context,
                                      const ModelParams& params, int top_k) {
  const Vector scores = params.item_emb * context;
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int k = top_k <= 0 ? n : std::min(top_k, n);
  auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  if (k < n) {
    std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
  } else {
    std::sort(order.begin(), order.end(), better);
  }
  std::vector<ScoredItem> ranked(k);
  for (int i = 0; i < k; ++i) ranked[i] = {order[i], scores[order[i]]};
  return ranked;
}

std::vector<ScoredItem> RankItems(int user, const Vector& query_vec,
                                  std::span<const ConversationVector> conv,
                                  const LambdaWeights& lambdas,
                                  const ModelParams& params, int top_k) {
  return RankByContext(
      ContextVector(user, query_vec, SumConversation(conv, params.dim()),
                    lambdas, params),
      params, top_k);
}

}  // namespace convps
