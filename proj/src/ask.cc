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

#include "convps/ask.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "convps/error.h"

namespace convps {

std::string_view StrategyName(StrategyKind kind) {
  return kStrategyNames[static_cast<int>(kind)];
}

StrategyKind ParseStrategy(std::string_view name) {
  for (size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == name) return static_cast<StrategyKind>(i);
  }
  std::string valid;
  for (auto n : kStrategyNames) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw InvalidArgument("unknown strategy '" + std::string(name) +
                        "' (valid: " + valid + ")");
}

void StrategyConfig::Validate() const {
  if (!(c >= 0) || !(beta >= 0)) {
    throw InvalidArgument("c and beta must be >= 0");
  }
  if (!(lambda_i > 0) || !(kernel_sigma2 > 0) || !(noise_sigma2 > 0)) {
    throw InvalidArgument("lambda_i, kernel_sigma2, noise_sigma2 must be > 0");
  }
  if (gp_init_t0 < 1) throw InvalidArgument("gp_init_t0 must be >= 1");
}

QuestionPool::QuestionPool(std::vector<std::string> slot_names,
                           Matrix occurrence)
    : slot_names_(std::move(slot_names)), occurrence_(std::move(occurrence)) {
  if (static_cast<Eigen::Index>(slot_names_.size()) != occurrence_.rows()) {
    throw InvalidArgument("slot names and occurrence rows differ");
  }
  items_with_.resize(slot_names_.size());
  for (Eigen::Index q = 0; q < occurrence_.rows(); ++q) {
    for (Eigen::Index v = 0; v < occurrence_.cols(); ++v) {
      const double x = occurrence_(q, v);
      if (x != 0.0 && x != 1.0) throw InvalidArgument("occurrence not binary");
      if (x == 1.0) items_with_[q].push_back(static_cast<int>(v));
    }
    if (items_with_[q].empty()) {
      throw InvalidArgument("slot '" + slot_names_[q] + "' is on no item");
    }
  }
  gram_ = occurrence_ * occurrence_.transpose();
}

QuestionPool QuestionPool::FromCorpus(const Corpus& corpus) {
  const int f = corpus.vocab().num_slots();
  Matrix occ = Matrix::Zero(f, corpus.num_items());
  for (int v = 0; v < corpus.num_items(); ++v) {
    for (const Annotation& a : corpus.items()[v].annotations) occ(a.slot, v) = 1.0;
  }
  return QuestionPool(corpus.vocab().slots, std::move(occ));
}

double QuestionPool::SquaredDistance(int i, int j) const {
  return gram_(i, i) + gram_(j, j) - 2.0 * gram_(i, j);
}

AskState::AskState(StrategyKind kind, int num_slots, uint64_t seed)
    : kind_(kind), excluded_(num_slots, false), available_(num_slots),
      rng_(seed) {}

void AskState::Record(int slot, int y) {
  if (slot < 0 || slot >= static_cast<int>(excluded_.size())) {
    throw InvalidArgument("unknown slot id " + std::to_string(slot));
  }
  if (y != 1 && y != -1) throw InvalidArgument("observation must be +1 or -1");
  if (excluded_[slot]) {
    throw FailedPrecondition("slot " + std::to_string(slot) + " already asked");
  }
  excluded_[slot] = true;
  --available_;
  asked_.push_back({slot, y});
}

std::vector<double> PreferenceVector(std::span<const int> ranked_items,
                                     int num_items) {
  if (static_cast<int>(ranked_items.size()) != num_items) {
    throw InvalidArgument("ranking does not cover every item");
  }
  std::vector<double> pi(num_items, 0.0);
  for (size_t k = 0; k < ranked_items.size(); ++k) {
    const int v = ranked_items[k];
    if (v < 0 || v >= num_items || pi[v] != 0.0) {
      throw InvalidArgument("ranking is not a permutation of the items");
    }
    pi[v] = 1.0 / static_cast<double>(k + 1);
  }
  return pi;
}

namespace {

bool Beats(double a, double b) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return a > b + kTieTolerance * scale;
}

void CheckExcluded(size_t scores, const std::vector<bool>& excluded) {
  if (scores != excluded.size()) {
    throw InvalidArgument("scores and exclusion mask differ in size");
  }
}

}  // namespace

int ArgmaxWithTies(std::span<const double> scores,
                   const std::vector<bool>& excluded) {
  CheckExcluded(scores.size(), excluded);
  int best = -1;
  for (int q = 0; q < static_cast<int>(scores.size()); ++q) {
    if (excluded[q]) continue;
    if (best < 0 || Beats(scores[q], scores[best])) best = q;
  }
  if (best < 0) throw FailedPrecondition("question pool exhausted");
  return best;
}

int ArgminWithTies(std::span<const double> scores,
                   const std::vector<bool>& excluded) {
  CheckExcluded(scores.size(), excluded);
  int best = -1;
  for (int q = 0; q < static_cast<int>(scores.size()); ++q) {
    if (excluded[q]) continue;
    if (best < 0 || Beats(-scores[q], -scores[best])) best = q;
  }
  if (best < 0) throw FailedPrecondition("question pool exhausted");
  return best;
}

std::vector<double> GbsObjectives(std::span<const double> pi,
                                  const QuestionPool& pool) {
  if (static_cast<int>(pi.size()) != pool.num_items()) {
    throw InvalidArgument("preference vector size differs from item count");
  }
  double total = 0.0;
  for (double p : pi) total += p;
  std::vector<double> out(pool.num_slots());
  for (int q = 0; q < pool.num_slots(); ++q) {
    double inside = 0.0;
    for (int v : pool.items_with(q)) inside += pi[v];
    out[q] = std::abs(2.0 * inside - total);
  }
  return out;
}

int GbsSelect(std::span<const double> pi, const QuestionPool& pool,
              const std::vector<bool>& excluded) {
  return ArgminWithTies(GbsObjectives(pi, pool), excluded);
}

std::vector<double> LinRelScores(const QuestionPool& pool,
                                 std::span<const AskedSlot> asked,
                                 const StrategyConfig& config) {
  const int l = static_cast<int>(asked.size());
  if (l == 0) throw InvalidArgument("LinRel needs at least one asked slot");
  // (X^T X + lambda I)^-1 X^T = X^T (X X^T + lambda I)^-1, an l x l system.
  Eigen::MatrixXd a(l, l);
  Eigen::VectorXd r(l);
  for (int i = 0; i < l; ++i) {
    r(i) = asked[i].y;
    for (int j = 0; j < l; ++j) a(i, j) = pool.Overlap(asked[i].slot, asked[j].slot);
  }
  a.diagonal().array() += config.lambda_i;
  Eigen::MatrixXd cross(l, pool.num_slots());
  for (int i = 0; i < l; ++i) {
    for (int q = 0; q < pool.num_slots(); ++q) {
      cross(i, q) = pool.Overlap(asked[i].slot, q);
    }
  }
  const Eigen::MatrixXd h = a.ldlt().solve(cross);  // column q is h_q
  std::vector<double> out(pool.num_slots());
  for (int q = 0; q < pool.num_slots(); ++q) {
    out[q] = h.col(q).dot(r) + 0.5 * config.c * h.col(q).norm();
  }
  return out;
}

int LinRelSelect(const QuestionPool& pool, std::span<const AskedSlot> asked,
                 const StrategyConfig& config,
                 const std::vector<bool>& excluded) {
  return ArgmaxWithTies(LinRelScores(pool, asked, config), excluded);
}

double RbfKernel(std::span<const double> a, std::span<const double> b,
                 double sigma2) {
  if (a.size() != b.size()) throw InvalidArgument("kernel length mismatch");
  double d2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return sigma2 * std::exp(-d2 / 2.0);
}

std::vector<GpMoments> GpPosterior(const QuestionPool& pool,
                                   std::span<const AskedSlot> observed,
                                   const StrategyConfig& config) {
  const int l = static_cast<int>(observed.size());
  if (l == 0) throw InvalidArgument("GP posterior needs an observation");
  const double s2 = config.kernel_sigma2;
  auto kernel = [&](int i, int j) {
    return s2 * std::exp(-pool.SquaredDistance(i, j) / 2.0);
  };
  Eigen::MatrixXd k(l, l);
  Eigen::VectorXd y(l);
  for (int i = 0; i < l; ++i) {
    y(i) = observed[i].y;
    for (int j = 0; j < l; ++j) k(i, j) = kernel(observed[i].slot, observed[j].slot);
  }
  k.diagonal().array() += config.noise_sigma2;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw FailedPrecondition("GP kernel matrix is not positive definite");
  }
  Eigen::MatrixXd kt(l, pool.num_slots());
  for (int i = 0; i < l; ++i) {
    for (int q = 0; q < pool.num_slots(); ++q) kt(i, q) = kernel(observed[i].slot, q);
  }
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd v = llt.matrixL().solve(kt);
  std::vector<GpMoments> out(pool.num_slots());
  for (int q = 0; q < pool.num_slots(); ++q) {
    double var = s2 - v.col(q).squaredNorm();
    if (var < 0.0) {
      if (var < -1e-9) throw FailedPrecondition("negative posterior variance");
      var = 0.0;
    }
    out[q] = {kt.col(q).dot(alpha), var};
  }
  return out;
}

double ExpectedImprovement(double mean, double stddev, double best_mean) {
  if (!(stddev > 0.0)) return 0.0;
  const double d = mean - best_mean;
  const double z = d / stddev;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return d * cdf + stddev * pdf;
}

std::vector<double> UcbScores(std::span<const GpMoments> moments, double beta) {
  std::vector<double> out;
  out.reserve(moments.size());
  for (const GpMoments& m : moments) out.push_back(m.mean + beta * std::sqrt(m.variance));
  return out;
}

std::vector<double> EiScores(std::span<const GpMoments> moments,
                             const std::vector<bool>& excluded) {
  CheckExcluded(moments.size(), excluded);
  double best = -std::numeric_limits<double>::infinity();
  for (size_t q = 0; q < moments.size(); ++q) {
    if (!excluded[q]) best = std::max(best, moments[q].mean);
  }
  std::vector<double> out(moments.size(), 0.0);
  for (size_t q = 0; q < moments.size(); ++q) {
    if (excluded[q]) continue;
    out[q] = ExpectedImprovement(moments[q].mean, std::sqrt(moments[q].variance), best);
  }
  return out;
}

int UcbSelect(const QuestionPool& pool, std::span<const AskedSlot> observed,
              const StrategyConfig& config, const std::vector<bool>& excluded) {
  return ArgmaxWithTies(UcbScores(GpPosterior(pool, observed, config), config.beta),
                        excluded);
}

int EiSelect(const QuestionPool& pool, std::span<const AskedSlot> observed,
             const StrategyConfig& config, const std::vector<bool>& excluded) {
  return ArgmaxWithTies(EiScores(GpPosterior(pool, observed, config), excluded),
                        excluded);
}

int NextQuestion(AskState& state, const QuestionPool& pool,
                 std::span<const double> pi, const StrategyConfig& config) {
  if (state.num_available() <= 0) {
    throw FailedPrecondition("question pool exhausted");
  }
  const auto& asked = state.asked();
  const auto& excluded = state.excluded();
  switch (state.kind()) {
    case StrategyKind::kRandom: {
      std::uniform_int_distribution<int> dist(0, state.num_available() - 1);
      int k = dist(state.rng());
      for (int q = 0; q < pool.num_slots(); ++q) {
        if (!excluded[q] && k-- == 0) return q;
      }
      break;
    }
    case StrategyKind::kGbs:
      return GbsSelect(pi, pool, excluded);
    case StrategyKind::kLinRel:
      if (asked.empty()) return GbsSelect(pi, pool, excluded);
      return LinRelSelect(pool, asked, config, excluded);
    case StrategyKind::kGpUcb:
    case StrategyKind::kGpEi:
      if (static_cast<int>(asked.size()) < config.gp_init_t0) {
        return GbsSelect(pi, pool, excluded);
      }
      return state.kind() == StrategyKind::kGpUcb
                 ? UcbSelect(pool, asked, config, excluded)
                 : EiSelect(pool, asked, config, excluded);
  }
  throw FailedPrecondition("question pool exhausted");
}

}  // namespace convps
