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

#include "convps/eval.h"

#include <algorithm>
#include <cstdio>

#include "convps/error.h"
#include "convps/metrics.h"

namespace convps {
namespace {

struct Accum {
  double map = 0.0, mrr = 0.0, ndcg = 0.0;
  int64_t pos = 0, neg = 0, invalid = 0;
};

uint64_t SessionSeed(uint64_t seed, size_t pair, size_t target) {
  uint64_t x = seed * 0x9e3779b97f4a7c15ULL + pair * 0xbf58476d1ce4e5b9ULL +
               target * 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<MetricsRow> Evaluate(const SearchContext& ctx,
                                 StrategyKind strategy, int l_max,
                                 uint64_t seed) {
  if (l_max < 0) throw InvalidArgument("L must be >= 0");
  const std::vector<TestPair> pairs = ctx.corpus.TestPairs();
  std::vector<Accum> per_l(l_max + 1);
  int n_pairs = 0;

  for (size_t p = 0; p < pairs.size(); ++p) {
    const TestPair& tp = pairs[p];
    const Query& query = ctx.corpus.queries()[tp.query];
    if (query.word_ids.empty()) continue;
    std::vector<int> targets;
    for (int v : tp.relevant) {
      if (!ctx.corpus.items()[v].annotations.empty()) targets.push_back(v);
    }
    if (targets.empty()) continue;

    std::vector<Accum> pair_l(l_max + 1);
    for (size_t t = 0; t < targets.size(); ++t) {
      const SimulatedUser sim = SimulatedUser::ForItem(ctx.corpus, targets[t]);
      Session session = StartSession(ctx, tp.user, query.word_ids, strategy,
                                     SessionSeed(seed, p, t));
      std::vector<int> top;
      int l = 0;
      Accum last;
      auto score_round = [&](const Session& s) {
        top.clear();
        const size_t n = std::min<size_t>(s.ranking.size(), kMapCutoff);
        for (size_t i = 0; i < n; ++i) top.push_back(s.ranking[i].item);
        Accum a = last;
        a.map = AveragePrecisionAt(top, tp.relevant, kMapCutoff);
        a.mrr = ReciprocalRankAt(top, tp.relevant, kMrrCutoff);
        a.ndcg = NdcgAt(top, tp.relevant, kNdcgCutoff);
        if (!s.transcript.empty()) {
          switch (s.transcript.back().feedback.kind) {
            case FeedbackKind::kPositive: ++a.pos; break;
            case FeedbackKind::kNegative: ++a.neg; break;
            case FeedbackKind::kInvalid: ++a.invalid; break;
          }
        }
        last = a;
        pair_l[l].map += a.map;
        pair_l[l].mrr += a.mrr;
        pair_l[l].ndcg += a.ndcg;
        pair_l[l].pos += a.pos;
        pair_l[l].neg += a.neg;
        pair_l[l].invalid += a.invalid;
        ++l;
      };
      RunConversation(ctx, sim, session, l_max, score_round);
      // An exhausted pool freezes the ranking for the remaining L.
      for (; l <= l_max; ++l) {
        pair_l[l].map += last.map;
        pair_l[l].mrr += last.mrr;
        pair_l[l].ndcg += last.ndcg;
        pair_l[l].pos += last.pos;
        pair_l[l].neg += last.neg;
        pair_l[l].invalid += last.invalid;
      }
    }
    const double nt = static_cast<double>(targets.size());
    for (int k = 0; k <= l_max; ++k) {
      per_l[k].map += pair_l[k].map / nt;
      per_l[k].mrr += pair_l[k].mrr / nt;
      per_l[k].ndcg += pair_l[k].ndcg / nt;
      per_l[k].pos += pair_l[k].pos;
      per_l[k].neg += pair_l[k].neg;
      per_l[k].invalid += pair_l[k].invalid;
    }
    ++n_pairs;
  }
  if (n_pairs == 0) throw FailedPrecondition("no evaluable test pairs");

  std::vector<MetricsRow> rows;
  for (int k = 0; k <= l_max; ++k) {
    MetricsRow r;
    r.strategy = std::string(StrategyName(strategy));
    r.L = k;
    r.seed = std::to_string(seed);
    r.map = per_l[k].map / n_pairs;
    r.mrr = per_l[k].mrr / n_pairs;
    r.ndcg = per_l[k].ndcg / n_pairs;
    const double answered =
        static_cast<double>(per_l[k].pos + per_l[k].neg + per_l[k].invalid);
    if (answered > 0) {
      r.pos_pct = 100.0 * per_l[k].pos / answered;
      r.neg_pct = 100.0 * per_l[k].neg / answered;
      r.invalid_pct = 100.0 * per_l[k].invalid / answered;
    }
    r.n_pairs = n_pairs;
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> Sweep(const SearchContext& ctx,
                              const std::vector<StrategyKind>& strategies,
                              const std::vector<int>& ls,
                              const std::vector<uint64_t>& seeds) {
  if (ls.empty() || seeds.empty()) {
    throw InvalidArgument("sweep needs at least one L and one seed");
  }
  const int l_max = *std::max_element(ls.begin(), ls.end());
  std::vector<MetricsRow> out;
  for (StrategyKind s : strategies) {
    std::vector<std::vector<MetricsRow>> by_seed;
    for (uint64_t seed : seeds) by_seed.push_back(Evaluate(ctx, s, l_max, seed));
    for (int l : ls) {
      MetricsRow mean;
      mean.strategy = std::string(StrategyName(s));
      mean.L = l;
      mean.seed = "mean";
      for (const auto& rows : by_seed) {
        const MetricsRow& r = rows[l];
        out.push_back(r);
        mean.map += r.map;
        mean.mrr += r.mrr;
        mean.ndcg += r.ndcg;
        mean.pos_pct += r.pos_pct;
        mean.neg_pct += r.neg_pct;
        mean.invalid_pct += r.invalid_pct;
        mean.n_pairs = r.n_pairs;
      }
      const double n = static_cast<double>(by_seed.size());
      mean.map /= n;
      mean.mrr /= n;
      mean.ndcg /= n;
      mean.pos_pct /= n;
      mean.neg_pct /= n;
      mean.invalid_pct /= n;
      out.push_back(mean);
    }
  }
  return out;
}

std::string MetricsCsv(const std::vector<MetricsRow>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const MetricsRow& r : rows) {
    out += r.strategy + ',' + std::to_string(r.L) + ',' + r.seed + ',' +
           FormatDouble(r.map) + ',' + FormatDouble(r.mrr) + ',' +
           FormatDouble(r.ndcg) + ',' + FormatDouble(r.pos_pct) + ',' +
           FormatDouble(r.neg_pct) + ',' + FormatDouble(r.invalid_pct) + ',' +
           std::to_string(r.n_pairs) + '\n';
  }
  return out;
}

}  // namespace convps
