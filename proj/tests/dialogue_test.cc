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


#include <cmath>
#include <string>
#include <vector>

#include "convps/checkpoint.h"
#include "convps/dialogue.h"
#include "convps/error.h"
#include "convps/synthetic.h"
#include "convps/training.h"
#include "doctest.h"
#include "json.hpp"
#include "test_util.h"

using namespace convps;

namespace {

CorpusRecords ShopRecords() {
  CorpusRecords r;
  r.users = {{"u0", "loves shiny phones"}, {"u1", "wants a cheap case"}};
  r.items = {
      {"i0", "shiny phone", "a phone", {"great"}, {{"price", "outstanding"}, {"color", "red"}}},
      {"i1", "phone case", "a case", {}, {{"price", "Outstanding"}, {"brand", "acme"}}},
      {"i2", "red case", "a red case", {"ok"}, {{"color", "red"}, {"brand", "acme"}}},
      {"i3", "teal phone", "a phone", {}, {{"price", "bargain"}, {"color", "teal"}}},
  };
  r.queries = {{"q0", "phone case"}};
  r.interactions = {
      {"u0", "q0", "i0", Split::kTrain}, {"u0", "q0", "i1", Split::kTrain},
      {"u1", "q0", "i2", Split::kTrain}, {"u1", "q0", "i0", Split::kTrain},
      {"u0", "q0", "i3", Split::kTest},
  };
  return r;
}

struct Shop {
  Corpus corpus = Corpus::Build(ShopRecords(), {.min_count = 1});
  ModelParams params =
      testutil::RandomParams(ShapeForCorpus(corpus, 6), 4);
  QuestionPool pool = QuestionPool::FromCorpus(corpus);
  SearchContext ctx() const { return {corpus, params, pool, {}, {}}; }
};

SearchContext WorldContext(LambdaWeights lambdas = {}) {
  const auto& w = testutil::SharedWorld();
  return {w.corpus, w.params, w.pool, lambdas, {}};
}

}  // namespace

TEST_CASE("simulated answers follow the target annotations") {
  const Shop shop;
  const Corpus& c = shop.corpus;
  const int price = c.vocab().FindSlot("price");
  const int brand = c.vocab().FindSlot("brand");
  const int color = c.vocab().FindSlot("color");
  const SimulatedUser i0 = SimulatedUser::ForItem(c, c.FindItem("i0"));
  const Feedback fb = SimulateAnswer(i0, c, price);
  CHECK(fb.kind == FeedbackKind::kPositive);
  CHECK(c.vocab().values[fb.value] == "outstanding");
  CHECK(SimulateAnswer(i0, c, brand).kind == FeedbackKind::kNegative);

  const SimulatedUser i3 = SimulatedUser::ForItem(c, c.FindItem("i3"));
  CHECK(SimulateAnswer(i3, c, price).kind == FeedbackKind::kInvalid);
  CHECK(SimulateAnswer(i3, c, color).kind == FeedbackKind::kInvalid);
  CHECK(SimulateAnswer(i3, c, brand).kind == FeedbackKind::kNegative);
  CHECK_THROWS_AS(SimulateAnswer(i3, c, 99), InvalidArgument);
  CHECK_THROWS_AS(SimulatedUser::ForItem(c, 17), NotFound);
}

TEST_CASE("new sessions rank every item") {
  const Shop shop;
  const SearchContext ctx = shop.ctx();
  const Session s = StartSession(ctx, 0, {shop.corpus.vocab().FindWord("phone")},
                                 StrategyKind::kGbs, 1);
  CHECK(s.rounds() == 0);
  CHECK(s.pending_slot == -1);
  CHECK(s.ranking.size() == 4);
  for (int v = 0; v < 4; ++v) CHECK(s.RankOf(v) >= 0);
  CHECK_THROWS_AS(StartSession(ctx, 5, {0}, StrategyKind::kGbs, 1), NotFound);
  CHECK_THROWS_AS(StartSession(ctx, 0, {}, StrategyKind::kGbs, 1), InvalidArgument);
  CHECK_NOTHROW(StartSession(ctx, kNoUser, {0}, StrategyKind::kGbs, 1));
}

TEST_CASE("same inputs give the same first question") {
  const SearchContext ctx = WorldContext();
  const auto& words = ctx.corpus.queries()[0].word_ids;
  for (std::string_view name : kStrategyNames) {
    CAPTURE(name);
    Session a = StartSession(ctx, 3, words, ParseStrategy(name), 77);
    Session b = StartSession(ctx, 3, words, ParseStrategy(name), 77);
    CHECK(AskNext(ctx, a) == AskNext(ctx, b));
  }
}

TEST_CASE("without the user weight the ranking ignores the user") {
  const SearchContext ctx = WorldContext({.user = 0.0});
  const auto& words = ctx.corpus.queries()[1].word_ids;
  const Session a = StartSession(ctx, 0, words, StrategyKind::kGbs, 1);
  const Session b = StartSession(ctx, 7, words, StrategyKind::kGbs, 1);
  CHECK(a.RankedItems() == b.RankedItems());
  const SearchContext personal = WorldContext();
  CHECK(StartSession(personal, 0, words, StrategyKind::kGbs, 1).RankedItems() !=
        StartSession(personal, 7, words, StrategyKind::kGbs, 1).RankedItems());
}

TEST_CASE("feedback moves scores by the conversation vector") {
  const Shop shop;
  SearchContext ctx = shop.ctx();
  ctx.lambdas.conv = 0.7;
  const Corpus& c = shop.corpus;
  Session s = StartSession(ctx, 1, {c.vocab().FindWord("case")},
                           StrategyKind::kGbs, 1);
  const int slot = AskNext(ctx, s);
  CHECK_THROWS_AS(AskNext(ctx, s), FailedPrecondition);
  const int target = c.FindItem("i0");
  const double before = s.ranking[s.RankOf(target)].score;
  const Annotation* a = c.items()[target].FindAnnotation(slot);
  const Feedback fb = a != nullptr ? Feedback::Positive(a->value)
                                   : Feedback::Negative();
  const ConversationVector cv = a != nullptr
                                    ? ComposePositive(slot, a->value, shop.params)
                                    : ComposeNegative(slot, shop.params);
  ApplyFeedback(ctx, s, slot, fb);
  const double after = s.ranking[s.RankOf(target)].score;
  const double expect = 0.7 * shop.params.item_emb.row(target).dot(cv.vec);
  CHECK(std::abs((after - before) - expect) < 1e-12);
  CHECK((after > before) == (expect > 0));
  CHECK(s.rounds() == 1);
  CHECK(s.accepted.size() == 1);
  CHECK(s.ask.IsExcluded(slot));
}

TEST_CASE("invalid feedback leaves the ranking untouched") {
  const SearchContext ctx = WorldContext();
  Session s = StartSession(ctx, 2, ctx.corpus.queries()[0].word_ids,
                           StrategyKind::kLinRel, 1);
  const int slot = AskNext(ctx, s);
  const std::vector<ScoredItem> before = s.ranking;
  ApplyFeedback(ctx, s, slot, Feedback::Invalid());
  REQUIRE(s.ranking.size() == before.size());
  for (size_t k = 0; k < before.size(); ++k) {
    CHECK(s.ranking[k].item == before[k].item);
    CHECK(s.ranking[k].score == before[k].score);
  }
  CHECK(s.accepted.empty());
  CHECK(s.ask.asked().back().y == -1);
  CHECK(s.transcript.back().feedback.kind == FeedbackKind::kInvalid);
}

TEST_CASE("feedback must answer the pending question") {
  const SearchContext ctx = WorldContext();
  Session s = StartSession(ctx, 2, ctx.corpus.queries()[0].word_ids,
                           StrategyKind::kGbs, 1);
  CHECK_THROWS_AS(ApplyFeedback(ctx, s, 0, Feedback::Negative()),
                  FailedPrecondition);
  const int slot = AskNext(ctx, s);
  const int other = slot == 0 ? 1 : 0;
  CHECK_THROWS_AS(ApplyFeedback(ctx, s, other, Feedback::Negative()),
                  FailedPrecondition);
  CHECK(s.rounds() == 0);
  CHECK_NOTHROW(ApplyFeedback(ctx, s, slot, Feedback::Negative()));
}

TEST_CASE("conversation loop") {
  const SearchContext ctx = WorldContext();
  const auto& words = ctx.corpus.queries()[0].word_ids;
  const SimulatedUser user = SimulatedUser::ForItem(ctx.corpus, 5);

  Session s0 = StartSession(ctx, 1, words, StrategyKind::kGbs, 1);
  const Trajectory t0 = RunConversation(ctx, user, s0, 0);
  REQUIRE(t0.rounds.size() == 1);
  CHECK(t0.rounds[0].slot == -1);
  CHECK(t0.rounds[0].target_rank == s0.RankOf(5));

  Session s = StartSession(ctx, 1, words, StrategyKind::kGpEi, 1);
  int calls = 0;
  const Trajectory t = RunConversation(ctx, user, s, 5,
                                       [&](const Session&) { ++calls; });
  CHECK(t.rounds.size() == 6);
  CHECK(calls == 6);
  CHECK(s.rounds() == 5);
  double rr = 0.0;
  for (const RoundRecord& r : t.rounds) {
    rr += 1.0 / (r.target_rank + 1);
    CHECK(r.mrr_so_far == doctest::Approx(rr / (r.round + 1)).epsilon(1e-15));
  }

  Session all = StartSession(ctx, 1, words, StrategyKind::kRandom, 3);
  const Trajectory full = RunConversation(ctx, user, all, 1000);
  CHECK(static_cast<int>(full.rounds.size()) == ctx.pool.num_slots() + 1);
  CHECK(PoolExhausted(all));

  const std::string jsonl = TrajectoryJsonl(t, ctx.pool);
  int lines = 0;
  size_t pos = 0;
  while ((pos = jsonl.find('\n', pos)) != std::string::npos) ++pos, ++lines;
  CHECK(lines == 6);
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  CHECK(first["round"] == 0);
  CHECK(first["slot"].is_null());
  CHECK(first["target_rank"] == t.rounds[0].target_rank);
}

TEST_CASE("asking questions improves the target rank on average") {
  SyntheticConfig sc;
  sc.num_users = 800;
  sc.num_items = 200;
  sc.seed = 12;
  const Corpus corpus = GenerateSynthetic(sc);
  TrainConfig tc;
  tc.epochs = 10;
  tc.dim = 32;
  const ModelParams params = Train(corpus, tc, {});
  const QuestionPool pool = QuestionPool::FromCorpus(corpus);
  const SearchContext ctx{corpus, params, pool, {}, {}};
  double initial = 0.0, final_rank = 0.0;
  int n = 0;
  for (const TestPair& pair : corpus.TestPairs()) {
    if (n >= 200) break;
    const auto& words = corpus.queries()[pair.query].word_ids;
    if (words.empty()) continue;
    for (int target : pair.relevant) {
      if (corpus.items()[target].annotations.empty()) continue;
      Session s = StartSession(ctx, pair.user, words, StrategyKind::kGbs, n);
      const Trajectory t =
          RunConversation(ctx, SimulatedUser::ForItem(corpus, target), s, 5);
      initial += t.rounds.front().target_rank;
      final_rank += t.rounds.back().target_rank;
      ++n;
    }
  }
  REQUIRE(n >= 200);
  MESSAGE("mean rank " << initial / n << " -> " << final_rank / n);
  CHECK(final_rank / n < initial / n);
}

TEST_CASE("question prompt template") {
  CHECK(QuestionPrompt("price") == "what price would you like?");
}
