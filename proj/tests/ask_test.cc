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
#include <set>
#include <string>
#include <vector>

#include "convps/ask.h"
#include "convps/error.h"
#include "doctest.h"
#include "oracles.h"
#include "strategy_check.h"
#include "test_util.h"

using namespace convps;

namespace {

QuestionPool PoolOf(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  std::vector<std::string> names;
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
    names.push_back("slot" + std::to_string(i));
  }
  return QuestionPool(names, m);
}

}  // namespace

TEST_CASE("strategy names round trip") {
  for (std::string_view name : kStrategyNames) {
    CHECK(StrategyName(ParseStrategy(name)) == name);
  }
  try {
    ParseStrategy("bandit");
    FAIL("expected a throw");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bandit") != std::string::npos);
    CHECK(msg.find("gp-ei") != std::string::npos);
    CHECK(msg.find("linrel") != std::string::npos);
  }
}

TEST_CASE("question pool validation") {
  CHECK_THROWS_AS(PoolOf({{1, 0}, {0, 0}}), InvalidArgument);
  CHECK_THROWS_AS(PoolOf({{1, 0.5}}), InvalidArgument);
  const QuestionPool p = PoolOf({{1, 1, 0}, {0, 1, 1}});
  CHECK(p.Overlap(0, 1) == 1);
  CHECK(p.Overlap(0, 0) == 2);
  CHECK(p.SquaredDistance(0, 1) == 2);
  CHECK(p.items_with(1) == std::vector<int>{1, 2});
}

TEST_CASE("pool from corpus mirrors annotations") {
  const Corpus& corpus = testutil::SharedWorld().corpus;
  const QuestionPool& pool = testutil::SharedWorld().pool;
  CHECK(pool.num_slots() == corpus.vocab().num_slots());
  CHECK(pool.num_items() == corpus.num_items());
  for (int v = 0; v < corpus.num_items(); ++v) {
    for (int q = 0; q < pool.num_slots(); ++q) {
      const bool has = corpus.items()[v].FindAnnotation(q) != nullptr;
      CHECK(pool.occurrence()(q, v) == (has ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("preference vector") {
  const std::vector<int> ranked{2, 0, 1};
  const std::vector<double> pi = PreferenceVector(ranked, 3);
  CHECK(pi[2] == 1.0);
  CHECK(pi[0] == 0.5);
  CHECK(pi[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("tie rule prefers the lowest id") {
  const std::vector<double> s{1.0, 3.0, 3.0, 2.0};
  std::vector<bool> ex(4, false);
  CHECK(ArgmaxWithTies(s, ex) == 1);
  ex[1] = true;
  CHECK(ArgmaxWithTies(s, ex) == 2);
  const std::vector<double> near{0.5, 0.5 + 1e-14, 0.5 - 1e-14};
  CHECK(ArgmaxWithTies(near, {false, false, false}) == 0);
  CHECK(ArgminWithTies(near, {false, false, false}) == 0);
  CHECK(ArgminWithTies(s, {false, false, false, false}) == 0);
  CHECK_THROWS_AS(ArgmaxWithTies(s, {true, true, true, true}), FailedPrecondition);
}

TEST_CASE("generalized binary search") {
  const QuestionPool pool = PoolOf({{1, 1}, {0, 1}});
  const std::vector<double> pi{0.5, 0.5};
  const auto obj = GbsObjectives(pi, pool);
  CHECK(obj[0] == 1.0);
  CHECK(obj[1] == 0.0);
  CHECK(GbsSelect(pi, pool, {false, false}) == 1);
  CHECK(GbsSelect(pi, pool, {false, true}) == 0);
}

TEST_CASE("linrel hand cases") {
  const QuestionPool pool = PoolOf({{1, 0}, {0, 1}});
  StrategyConfig config;
  const std::vector<AskedSlot> asked{{0, +1}};
  const auto s = LinRelScores(pool, asked, config);
  CHECK(s[0] == doctest::Approx(3.0 / 1.1).epsilon(1e-14));
  CHECK(s[0] == doctest::Approx(2.7273).epsilon(1e-4));
  CHECK(s[1] == 0.0);
  config.c = 0.0;
  CHECK(LinRelScores(pool, asked, config)[0] ==
        doctest::Approx(1.0 / 1.1).epsilon(1e-14));
  CHECK(LinRelSelect(pool, asked, config, {true, false}) == 1);
}

TEST_CASE("rbf kernel") {
  const std::vector<double> a{1, 0, 1, 0}, b{0, 1, 1, 0};
  CHECK(RbfKernel(a, a, 1.0) == 1.0);
  CHECK(RbfKernel(a, b, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(RbfKernel(a, b, 1.0) == doctest::Approx(0.3679).epsilon(1e-4));
  CHECK(RbfKernel(a, b, 2.0) == RbfKernel(b, a, 2.0));
}

TEST_CASE("gp posterior hand cases") {
  std::vector<double> far_row(80, 0.0);
  for (int i = 40; i < 80; ++i) far_row[i] = 1.0;
  std::vector<double> near_row(80, 0.0);
  for (int i = 0; i < 40; ++i) near_row[i] = 1.0;
  const QuestionPool pool = PoolOf({near_row, near_row, far_row});
  StrategyConfig config;
  const std::vector<AskedSlot> obs{{0, +1}};
  const auto m = GpPosterior(pool, obs, config);
  CHECK(m[1].mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(m[1].mean - 0.5) < 1e-9);
  CHECK(std::abs(m[1].variance - 0.5) < 1e-9);
  // Hamming distance 80 puts the kernel at exp(-40).
  CHECK(std::abs(m[2].mean) < 1e-15);
  CHECK(std::abs(m[2].variance - 1.0) < 1e-15);

  const auto ucb = UcbScores(m, 2.0);
  CHECK(ucb[1] == doctest::Approx(0.5 + 2 * std::sqrt(0.5)).epsilon(1e-12));
  CHECK(ucb[1] == doctest::Approx(1.9142).epsilon(1e-4));
  CHECK(UcbSelect(pool, obs, config, {true, false, false}) == 2);
  config.beta = 0.0;
  CHECK(UcbSelect(pool, obs, config, {true, false, false}) == 1);
}

TEST_CASE("expected improvement") {
  CHECK(ExpectedImprovement(0.3, 0.7071, 0.3) ==
        doctest::Approx(0.2821).epsilon(1e-4));
  CHECK(ExpectedImprovement(0.3, 0.0, 0.3) == 0.0);
  CHECK(ExpectedImprovement(-1.0, 0.0, 0.3) == 0.0);
  for (double mu : {-2.0, -0.1, 0.0, 0.4, 3.0}) {
    for (double sd : {0.0, 0.01, 0.5, 2.0}) {
      const double ei = ExpectedImprovement(mu, sd, 0.4);
      CHECK(ei >= 0.0);
      CHECK(ei == doctest::Approx(oracle::Ei(mu, sd, 0.4)).epsilon(1e-12));
    }
  }
}

TEST_CASE("selection matches the dense oracles") {
  int mismatches = 0;
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 150; ++seed) {
    const auto o = strategycheck::RunInstance(seed);
    mismatches += o.mismatches();
    worst = std::max(worst, o.max_err());
  }
  CHECK(mismatches == 0);
  CHECK(worst < 1e-8);
}

TEST_CASE("ask state bookkeeping") {
  AskState s(StrategyKind::kGbs, 3, 1);
  CHECK(s.num_available() == 3);
  s.Record(1, -1);
  CHECK(s.IsExcluded(1));
  CHECK(s.num_available() == 2);
  CHECK(s.asked().size() == 1);
  CHECK_THROWS_AS(s.Record(1, +1), FailedPrecondition);
  CHECK_THROWS(s.Record(5, +1));
}

TEST_CASE("dispatch follows the initialization rules") {
  // Slot 2 splits the uniform preference evenly.
  const QuestionPool pool =
      PoolOf({{1, 1, 1, 1}, {1, 1, 1, 0}, {1, 1, 0, 0}, {0, 0, 0, 1}});
  const std::vector<double> pi{0.25, 0.25, 0.25, 0.25};
  StrategyConfig config;
  const int gbs = GbsSelect(pi, pool, std::vector<bool>(4, false));
  CHECK(gbs == 2);

  AskState lin(StrategyKind::kLinRel, 4, 1);
  CHECK(NextQuestion(lin, pool, pi, config) == gbs);
  lin.Record(gbs, +1);
  CHECK(NextQuestion(lin, pool, pi, config) ==
        LinRelSelect(pool, lin.asked(), config, lin.excluded()));

  for (StrategyKind kind : {StrategyKind::kGpUcb, StrategyKind::kGpEi}) {
    AskState gp(kind, 4, 1);
    CHECK(NextQuestion(gp, pool, pi, config) == gbs);
    gp.Record(gbs, +1);
    CHECK(NextQuestion(gp, pool, pi, config) ==
          GbsSelect(pi, pool, gp.excluded()));
    gp.Record(NextQuestion(gp, pool, pi, config), -1);
    const int expect = kind == StrategyKind::kGpUcb
                           ? UcbSelect(pool, gp.asked(), config, gp.excluded())
                           : EiSelect(pool, gp.asked(), config, gp.excluded());
    CHECK(NextQuestion(gp, pool, pi, config) == expect);
  }
}

TEST_CASE("random strategy covers the open slots uniformly") {
  const QuestionPool pool = PoolOf({{1}, {1}, {1}, {1}});
  const std::vector<double> pi{1.0};
  StrategyConfig config;
  std::vector<int> counts(4, 0);
  AskState s(StrategyKind::kRandom, 4, 9);
  s.Record(2, -1);
  for (int i = 0; i < 3000; ++i) ++counts[NextQuestion(s, pool, pi, config)];
  CHECK(counts[2] == 0);
  for (int q : {0, 1, 3}) CHECK(counts[q] == doctest::Approx(1000).epsilon(0.1));

  AskState a(StrategyKind::kRandom, 4, 5), b(StrategyKind::kRandom, 4, 5);
  for (int i = 0; i < 10; ++i) {
    CHECK(NextQuestion(a, pool, pi, config) == NextQuestion(b, pool, pi, config));
  }

  AskState done(StrategyKind::kGbs, 4, 1);
  for (int q = 0; q < 4; ++q) done.Record(q, -1);
  CHECK_THROWS_AS(NextQuestion(done, pool, pi, config), FailedPrecondition);
}

TEST_CASE("strategy config validation") {
  CHECK_NOTHROW(StrategyConfig{}.Validate());
  StrategyConfig c;
  c.lambda_i = 0;
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
  c = {};
  c.noise_sigma2 = -1;
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
  c = {};
  c.gp_init_t0 = 0;
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
}
