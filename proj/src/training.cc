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

#include "convps/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "convps/checkpoint.h"
#include "convps/error.h"

namespace convps {
namespace {

constexpr double kSigmoidClamp = 40.0;

double Sigmoid(double x) {
  x = std::clamp(x, -kSigmoidClamp, kSigmoidClamp);
  return 1.0 / (1.0 + std::exp(-x));
}

double LogSigmoid(double x) {
  x = std::clamp(x, -kSigmoidClamp, kSigmoidClamp);
  return -std::log1p(std::exp(-x));
}

struct QueryForward {
  Vector mean;
  Vector q;
  int count = 0;
};

QueryForward ForwardQuery(std::span<const int> words, const ModelParams& p) {
  QueryForward f;
  f.mean = Vector::Zero(p.dim());
  for (int w : words) {
    f.mean += p.word_emb.row(w).transpose();
    ++f.count;
  }
  if (f.count == 0) throw InvalidArgument("training example has an empty query");
  f.mean /= f.count;
  f.q = (p.proj_weight * f.mean + p.proj_bias).array().tanh();
  return f;
}

void BackwardQuery(const QueryForward& f, std::span<const int> words,
                   const Vector& dq, const ModelParams& p, Gradients& g) {
  const Vector dpre = dq.array() * (1.0 - f.q.array().square());
  g.proj_weight().noalias() += dpre * f.mean.transpose();
  g.proj_bias() += dpre;
  const Vector dmean = p.proj_weight.transpose() * dpre / f.count;
  for (int w : words) g.Row(Table::kWord, w) += dmean;
}

Vector PairVector(const ModelParams& p, const SlotValuePair& pair) {
  return 0.5 * (p.slot_pos_emb.row(pair.slot) + p.value_emb.row(pair.value))
                   .transpose();
}

void AddPairGrad(Gradients& g, const SlotValuePair& pair, const Vector& d) {
  g.Row(Table::kSlotPos, pair.slot) += 0.5 * d;
  g.Row(Table::kValue, pair.value) += 0.5 * d;
}

const SlotValuePair& PairAt(const LossContext& ctx, int pair) {
  if (pair < 0 || pair >= static_cast<int>(ctx.pairs.size())) {
    throw InvalidArgument("unknown pair id " + std::to_string(pair));
  }
  return ctx.pairs[pair];
}

// Scores one positive and the negatives against a center vector; `grads`
// may be null for a loss-only evaluation.
template <typename TargetFn, typename TargetGradFn>
double ScoreAgainstCenter(const Vector& center, int positive,
                          std::span<const int> negatives, TargetFn&& target,
                          TargetGradFn&& target_grad, Vector* dcenter) {
  double loss = 0.0;
  auto term = [&](int id, bool is_positive) {
    const Vector t = target(id);
    const double s = t.dot(center);
    loss -= is_positive ? LogSigmoid(s) : LogSigmoid(-s);
    if (dcenter != nullptr) {
      const double gs = is_positive ? Sigmoid(s) - 1.0 : Sigmoid(s);
      *dcenter += gs * t;
      target_grad(id, Vector(gs * center));
    }
  };
  term(positive, true);
  for (int n : negatives) term(n, false);
  return loss;
}

// Core loss. For item_given_* examples `query_vec` is Q and d(loss)/dQ is
// added to `dq`; query backpropagation is left to the caller.
double CoreLoss(const TrainingExample& ex, std::span<const int> negatives,
                const LossContext& ctx, const Vector* query_vec, Gradients* g,
                Vector* dq) {
  const ModelParams& p = ctx.params;
  const int t = p.dim();
  Vector dcenter;
  Vector* dc = nullptr;
  if (g != nullptr) {
    dcenter = Vector::Zero(t);
    dc = &dcenter;
  }

  switch (ex.kind) {
    case ExampleKind::kWordFromItem:
    case ExampleKind::kWordFromUser: {
      const bool from_item = ex.kind == ExampleKind::kWordFromItem;
      const Table ct = from_item ? Table::kItem : Table::kUser;
      const int cid = from_item ? ex.item : ex.user;
      const Vector center = TableOf(p, ct).row(cid).transpose();
      const double loss = ScoreAgainstCenter(
          center, ex.word, negatives,
          [&](int w) -> Vector { return p.word_emb.row(w).transpose(); },
          [&](int w, const Vector& d) {
            if (g != nullptr) g->Row(Table::kWord, w) += d;
          },
          dc);
      if (g != nullptr) g->Row(ct, cid) += dcenter;
      return loss;
    }
    case ExampleKind::kPairFromItem:
    case ExampleKind::kPairFromUser: {
      const bool from_item = ex.kind == ExampleKind::kPairFromItem;
      const Table ct = from_item ? Table::kItem : Table::kUser;
      const int cid = from_item ? ex.item : ex.user;
      const Vector center = TableOf(p, ct).row(cid).transpose();
      const double loss = ScoreAgainstCenter(
          center, ex.pair, negatives,
          [&](int id) { return PairVector(p, PairAt(ctx, id)); },
          [&](int id, const Vector& d) {
            if (g != nullptr) AddPairGrad(*g, PairAt(ctx, id), d);
          },
          dc);
      if (g != nullptr) g->Row(ct, cid) += dcenter;
      return loss;
    }
    case ExampleKind::kItemGivenUserQuery:
    case ExampleKind::kItemGivenUserQueryConv: {
      const LambdaWeights& lam = ctx.lambdas;
      Vector context = lam.user * p.user_emb.row(ex.user).transpose() +
                       lam.query * *query_vec;
      const bool with_conv = ex.kind == ExampleKind::kItemGivenUserQueryConv;
      const bool negative_conv =
          with_conv && ex.polarity == ConversationVector::Polarity::kNegative;
      if (with_conv) {
        const Vector c = negative_conv
                             ? Vector(p.slot_neg_emb.row(ex.slot).transpose())
                             : PairVector(p, PairAt(ctx, ex.pair));
        context += lam.conv * c;
      }
      const double loss = ScoreAgainstCenter(
          context, ex.item, negatives,
          [&](int v) -> Vector { return p.item_emb.row(v).transpose(); },
          [&](int v, const Vector& d) {
            if (g != nullptr) g->Row(Table::kItem, v) += d;
          },
          dc);
      if (g != nullptr) {
        g->Row(Table::kUser, ex.user) += lam.user * dcenter;
        *dq += lam.query * dcenter;
        if (with_conv) {
          if (negative_conv) {
            g->Row(Table::kSlotNeg, ex.slot) += lam.conv * dcenter;
          } else {
            AddPairGrad(*g, PairAt(ctx, ex.pair), lam.conv * dcenter);
          }
        }
      }
      return loss;
    }
  }
  return 0.0;
}

bool UsesQuery(ExampleKind kind) {
  return kind == ExampleKind::kItemGivenUserQuery ||
         kind == ExampleKind::kItemGivenUserQueryConv;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1 || batch_size < 1 || neg_samples < 1 || dim < 1 ||
      max_neg_slots < 0) {
    throw InvalidArgument("epochs, batch size, negatives and dim must be >= 1");
  }
  if (!(lr0 > 0) || !(clip_norm > 0) || !(subsample_t > 0)) {
    throw InvalidArgument("lr0, clip_norm and subsample_t must be positive");
  }
  if (!(l2_gamma >= 0)) throw InvalidArgument("l2_gamma must be >= 0");
}

SamplingTable SamplingTable::FromCounts(std::span<const int64_t> counts) {
  if (counts.empty()) throw InvalidArgument("sampling table needs counts");
  SamplingTable table;
  table.prob_.reserve(counts.size());
  double total = 0.0;
  for (int64_t c : counts) {
    if (c <= 0) throw InvalidArgument("sampling counts must be positive");
    table.prob_.push_back(std::pow(static_cast<double>(c), 0.75));
    total += table.prob_.back();
  }
  double acc = 0.0;
  table.cdf_.reserve(counts.size());
  for (double& pr : table.prob_) {
    pr /= total;
    table.cdf_.push_back(acc += pr);
  }
  table.cdf_.back() = 1.0;
  return table;
}

int SamplingTable::Sample(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(std::min<ptrdiff_t>(it - cdf_.begin(), size() - 1));
}

SamplingTables SamplingTables::ForCorpus(const Corpus& corpus) {
  SamplingTables t;
  if (!corpus.vocab().word_counts.empty()) {
    t.words = SamplingTable::FromCounts(corpus.vocab().word_counts);
  }
  if (!corpus.vocab().pair_counts.empty()) {
    t.pairs = SamplingTable::FromCounts(corpus.vocab().pair_counts);
  }
  t.num_items = corpus.num_items();
  return t;
}

const char* ExampleKindName(ExampleKind kind) {
  switch (kind) {
    case ExampleKind::kWordFromItem: return "word_from_item";
    case ExampleKind::kWordFromUser: return "word_from_user";
    case ExampleKind::kPairFromItem: return "pair_from_item";
    case ExampleKind::kPairFromUser: return "pair_from_user";
    case ExampleKind::kItemGivenUserQuery: return "item_given_uQ";
    case ExampleKind::kItemGivenUserQueryConv: return "item_given_uQc";
  }
  return "unknown";
}

Gradients::Gradients(int dim) : dim_(dim) {}

Vector& Gradients::Row(Table table, int row) {
  TableGrad& tg = tables_[static_cast<int>(table)];
  auto [it, inserted] = tg.index.emplace(row, tg.values.size());
  if (inserted) {
    tg.rows.push_back(row);
    tg.values.push_back(Vector::Zero(dim_));
  }
  return tg.values[it->second];
}

const Vector* Gradients::FindRow(Table table, int row) const {
  const TableGrad& tg = tables_[static_cast<int>(table)];
  auto it = tg.index.find(row);
  return it == tg.index.end() ? nullptr : &tg.values[it->second];
}

Matrix& Gradients::proj_weight() {
  if (!has_projection_) {
    proj_weight_ = Matrix::Zero(dim_, dim_);
    proj_bias_ = Vector::Zero(dim_);
    has_projection_ = true;
  }
  return proj_weight_;
}

Vector& Gradients::proj_bias() {
  proj_weight();
  return proj_bias_;
}

double Gradients::SquaredNorm() const {
  double total = 0.0;
  for (const auto& tg : tables_) {
    for (const auto& v : tg.values) total += v.squaredNorm();
  }
  if (has_projection_) {
    total += proj_weight_.squaredNorm() + proj_bias_.squaredNorm();
  }
  return total;
}

void Gradients::Scale(double factor) {
  for (auto& tg : tables_) {
    for (auto& v : tg.values) v *= factor;
  }
  if (has_projection_) {
    proj_weight_ *= factor;
    proj_bias_ *= factor;
  }
}

void Gradients::Clear() {
  for (auto& tg : tables_) {
    tg.index.clear();
    tg.rows.clear();
    tg.values.clear();
  }
  has_projection_ = false;
}

void Gradients::ApplyTo(ModelParams& params, double lr) const {
  for (int t = 0; t < kNumTables; ++t) {
    Matrix& m = TableOf(params, static_cast<Table>(t));
    const TableGrad& tg = tables_[t];
    for (size_t i = 0; i < tg.rows.size(); ++i) {
      m.row(tg.rows[i]) -= lr * tg.values[i].transpose();
    }
  }
  if (has_projection_) {
    params.proj_weight -= lr * proj_weight_;
    params.proj_bias -= lr * proj_bias_;
  }
}

Matrix& TableOf(ModelParams& params, Table table) {
  switch (table) {
    case Table::kUser: return params.user_emb;
    case Table::kItem: return params.item_emb;
    case Table::kWord: return params.word_emb;
    case Table::kSlotPos: return params.slot_pos_emb;
    case Table::kSlotNeg: return params.slot_neg_emb;
    case Table::kValue: return params.value_emb;
  }
  return params.user_emb;
}

const Matrix& TableOf(const ModelParams& params, Table table) {
  return TableOf(const_cast<ModelParams&>(params), table);
}

std::vector<int> SampleNegatives(const TrainingExample& example,
                                 const SamplingTables& tables, int alpha,
                                 Rng& rng) {
  std::vector<int> out;
  out.reserve(alpha);
  switch (example.kind) {
    case ExampleKind::kWordFromItem:
    case ExampleKind::kWordFromUser:
      if (tables.words.empty()) throw InvalidArgument("no word table");
      for (int k = 0; k < alpha; ++k) out.push_back(tables.words.Sample(rng));
      break;
    case ExampleKind::kPairFromItem:
    case ExampleKind::kPairFromUser:
      if (tables.pairs.empty()) throw InvalidArgument("no pair table");
      for (int k = 0; k < alpha; ++k) out.push_back(tables.pairs.Sample(rng));
      break;
    case ExampleKind::kItemGivenUserQuery:
    case ExampleKind::kItemGivenUserQueryConv: {
      if (tables.num_items < 1) throw InvalidArgument("no items to sample");
      std::uniform_int_distribution<int> dist(0, tables.num_items - 1);
      for (int k = 0; k < alpha; ++k) out.push_back(dist(rng));
      break;
    }
  }
  return out;
}

double ExampleLossAndGrads(const TrainingExample& example,
                           std::span<const int> negatives,
                           const LossContext& ctx, Gradients& grads) {
  if (!UsesQuery(example.kind)) {
    return CoreLoss(example, negatives, ctx, nullptr, &grads, nullptr);
  }
  const QueryForward f = ForwardQuery(example.query_words, ctx.params);
  Vector dq = Vector::Zero(ctx.params.dim());
  const double loss = CoreLoss(example, negatives, ctx, &f.q, &grads, &dq);
  BackwardQuery(f, example.query_words, dq, ctx.params, grads);
  return loss;
}

double ExampleLoss(const TrainingExample& example,
                   std::span<const int> negatives, const LossContext& ctx) {
  if (!UsesQuery(example.kind)) {
    return CoreLoss(example, negatives, ctx, nullptr, nullptr, nullptr);
  }
  const QueryForward f = ForwardQuery(example.query_words, ctx.params);
  return CoreLoss(example, negatives, ctx, &f.q, nullptr, nullptr);
}

NsResult NsLossAndGrads(const TrainingExample& example, const LossContext& ctx,
                        const SamplingTables& tables, int alpha, Rng& rng) {
  NsResult r{0.0, Gradients(ctx.params.dim()), {}};
  r.negatives = SampleNegatives(example, tables, alpha, rng);
  r.loss = ExampleLossAndGrads(example, r.negatives, ctx, r.grads);
  return r;
}

double LrAt(int64_t step, int64_t total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  step = std::clamp<int64_t>(step, 0, total_steps - 1);
  return lr0 * (1.0 - static_cast<double>(step) /
                          static_cast<double>(total_steps));
}

double ClipGlobal(Gradients& grads, double clip_norm) {
  const double norm = std::sqrt(grads.SquaredNorm());
  if (norm > clip_norm) grads.Scale(clip_norm / norm);
  return norm;
}

namespace {

struct WordKeep {
  std::vector<double> keep;  // per word id
};

WordKeep ComputeKeep(const Corpus& corpus, double threshold) {
  const auto& counts = corpus.vocab().word_counts;
  double total = 0.0;
  for (int64_t c : counts) total += static_cast<double>(c);
  WordKeep k;
  k.keep.reserve(counts.size());
  for (int64_t c : counts) {
    k.keep.push_back(SubsampleKeepProbability(c / total, threshold));
  }
  return k;
}

void AppendExamples(const Corpus& corpus, const TrainConfig& config,
                    const WordKeep* keep, Rng* rng,
                    std::vector<TrainingExample>* out, double* expected) {
  const int num_slots = corpus.vocab().num_slots();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto add = [&](const TrainingExample& ex) {
    if (out != nullptr) out->push_back(ex);
    if (expected != nullptr) *expected += 1.0;
  };
  auto add_word = [&](TrainingExample ex) {
    const double p = keep->keep[ex.word];
    if (expected != nullptr) *expected += p;
    if (out != nullptr && (p >= 1.0 || coin(*rng) < p)) out->push_back(ex);
  };

  for (const Interaction& in : corpus.interactions()) {
    if (in.split != Split::kTrain) continue;
    const Query& query = corpus.queries()[in.query];
    if (query.word_ids.empty()) continue;
    const Item& item = corpus.items()[in.item];
    const User& user = corpus.users()[in.user];

    TrainingExample base;
    base.user = in.user;
    base.item = in.item;
    base.query = in.query;
    base.query_words = query.word_ids;

    TrainingExample ex = base;
    ex.kind = ExampleKind::kItemGivenUserQuery;
    add(ex);

    ex.kind = ExampleKind::kItemGivenUserQueryConv;
    for (int pair : item.pair_ids) {
      ex.pair = pair;
      ex.polarity = ConversationVector::Polarity::kPositive;
      add(ex);
    }

    // Negative slots: uniform over slots the item does not carry.
    const int want = std::min<int>(static_cast<int>(item.pair_ids.size()),
                                   config.max_neg_slots);
    std::vector<bool> carried(num_slots, false);
    for (const auto& a : item.annotations) carried[a.slot] = true;
    const int absent =
        num_slots - static_cast<int>(std::count(carried.begin(), carried.end(), true));
    const int n_neg = std::min(want, absent);
    if (out != nullptr && n_neg > 0) {
      std::uniform_int_distribution<int> pick(0, num_slots - 1);
      std::vector<int> chosen;
      while (static_cast<int>(chosen.size()) < n_neg) {
        const int q = pick(*rng);
        if (carried[q]) continue;
        if (std::find(chosen.begin(), chosen.end(), q) != chosen.end()) continue;
        chosen.push_back(q);
      }
      TrainingExample neg = base;
      neg.kind = ExampleKind::kItemGivenUserQueryConv;
      neg.polarity = ConversationVector::Polarity::kNegative;
      for (int q : chosen) {
        neg.slot = q;
        out->push_back(neg);
      }
    }
    if (expected != nullptr) *expected += n_neg;

    TrainingExample lm;
    lm.user = in.user;
    lm.item = in.item;
    lm.kind = ExampleKind::kPairFromItem;
    for (int pair : item.pair_ids) {
      lm.pair = pair;
      add(lm);
    }
    lm.kind = ExampleKind::kPairFromUser;
    for (int pair : user.history_pairs) {
      lm.pair = pair;
      add(lm);
    }
    lm.pair = -1;
    lm.kind = ExampleKind::kWordFromItem;
    for (int w : item.description_tokens) {
      lm.word = w;
      add_word(lm);
    }
    for (int w : item.review_tokens) {
      lm.word = w;
      add_word(lm);
    }
    lm.kind = ExampleKind::kWordFromUser;
    for (int w : user.review_tokens) {
      lm.word = w;
      add_word(lm);
    }
  }
}

}  // namespace

std::vector<TrainingExample> BuildEpochExamples(const Corpus& corpus,
                                                const TrainConfig& config,
                                                Rng& rng) {
  const WordKeep keep = ComputeKeep(corpus, config.subsample_t);
  std::vector<TrainingExample> out;
  AppendExamples(corpus, config, &keep, &rng, &out, nullptr);
  return out;
}

ModelParams Train(const Corpus& corpus, const TrainConfig& config,
                  const LambdaWeights& lambdas, const EpochCallback& on_epoch) {
  config.Validate();
  ModelParams params =
      ModelParams::Initialize(ShapeForCorpus(corpus, config.dim), config.seed);
  TrainFrom(params, corpus, config, lambdas, on_epoch);
  return params;
}

void TrainFrom(ModelParams& params, const Corpus& corpus,
               const TrainConfig& config, const LambdaWeights& lambdas,
               const EpochCallback& on_epoch) {
  config.Validate();
  lambdas.Validate();
  if (std::none_of(corpus.interactions().begin(), corpus.interactions().end(),
                   [](const Interaction& in) { return in.split == Split::kTrain; })) {
    throw InvalidArgument("training set is empty");
  }
  const SamplingTables tables = SamplingTables::ForCorpus(corpus);
  const WordKeep keep = ComputeKeep(corpus, config.subsample_t);
  double expected = 0.0;
  AppendExamples(corpus, config, &keep, nullptr, nullptr, &expected);
  const int64_t steps_per_epoch = std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(expected / config.batch_size)));
  const int64_t total_steps = steps_per_epoch * config.epochs;

  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const LossContext ctx{params, corpus.vocab().pairs, lambdas};
  Gradients grads(params.dim());

  struct CachedQuery {
    int query;
    QueryForward forward;
    Vector dq;
  };
  std::vector<CachedQuery> cache;
  int64_t step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrainingExample> examples;
    AppendExamples(corpus, config, &keep, &rng, &examples, nullptr);
    std::shuffle(examples.begin(), examples.end(), rng);

    double loss_sum = 0.0;
    double lr = config.lr0;
    for (size_t begin = 0; begin < examples.size();
         begin += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(examples.size(), begin + static_cast<size_t>(config.batch_size));
      grads.Clear();
      cache.clear();
      for (size_t i = begin; i < end; ++i) {
        const TrainingExample& ex = examples[i];
        const std::vector<int> negatives =
            SampleNegatives(ex, tables, config.neg_samples, rng);
        if (!UsesQuery(ex.kind)) {
          loss_sum += CoreLoss(ex, negatives, ctx, nullptr, &grads, nullptr);
          continue;
        }
        auto it = std::find_if(cache.begin(), cache.end(),
                               [&](const CachedQuery& c) { return c.query == ex.query; });
        if (it == cache.end()) {
          cache.push_back({ex.query, ForwardQuery(ex.query_words, params),
                           Vector::Zero(params.dim())});
          it = cache.end() - 1;
        }
        loss_sum += CoreLoss(ex, negatives, ctx, &it->forward.q, &grads, &it->dq);
      }
      for (const CachedQuery& c : cache) {
        BackwardQuery(c.forward, corpus.queries()[c.query].word_ids, c.dq,
                      params, grads);
      }
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.Scale(inv_batch);
      if (config.l2_gamma > 0) {
        const double decay = 2.0 * config.l2_gamma * inv_batch;
        for (int t = 0; t < kNumTables; ++t) {
          const Table table = static_cast<Table>(t);
          const Matrix& m = TableOf(params, table);
          for (int row : grads.touched(table)) {
            grads.Row(table, row) += decay * m.row(row).transpose();
          }
        }
      }
      ClipGlobal(grads, config.clip_norm);
      lr = LrAt(step, total_steps, config.lr0);
      grads.ApplyTo(params, lr);
      ++step;
    }
    const auto stop = std::chrono::steady_clock::now();
    if (on_epoch) {
      EpochStats stats;
      stats.epoch = epoch;
      stats.examples = static_cast<int64_t>(examples.size());
      stats.mean_loss = examples.empty() ? 0.0 : loss_sum / examples.size();
      stats.lr = lr;
      stats.wall_ms =
          std::chrono::duration<double, std::milli>(stop - start).count();
      on_epoch(stats);
    }
  }
}

}  // namespace convps
