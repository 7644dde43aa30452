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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits 1 when
// any criterion fails. Tolerances and sizes are fixed below.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "CLI11.hpp"
#include "convps/ask.h"
#include "convps/corpus.h"
#include "convps/dialogue.h"
#include "convps/eval.h"
#include "convps/metrics.h"
#include "convps/model.h"
#include "convps/synthetic.h"
#include "convps/training.h"
#include "json.hpp"
#include "gradcheck.h"
#include "oracles.h"
#include "strategy_check.h"
#include "test_util.h"

using namespace convps;
namespace fs = std::filesystem;

namespace {

constexpr int kGradTrialsPerKind = 100;
constexpr int kGradDim = 64;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 60.0;

constexpr int kSoftmaxStates = 1000;
constexpr int kSoftmaxItems = 200;

constexpr int kStrategyInstances = 600;
constexpr double kStrategyTol = 1e-8;
constexpr double kGpHandTol = 1e-9;

constexpr int kMetricRankings = 1000;
constexpr double kMetricTol = 1e-12;

constexpr uint64_t kPipelineSeeds[] = {1, 2, 3};
constexpr int kConvL = 5;
constexpr double kConvGain = 1.2;
constexpr double kInformedGain = 1.1;
constexpr double kPipelineBudgetS = 15 * 60.0;

constexpr int kNegativeSessions = 200;
constexpr double kAlpha = 0.05;

constexpr int kDegenerateStates = 200;

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Line {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void Report(const std::string& name, const Line& line) {
  std::cout << (line.pass ? "PASS " : "FAIL ") << name << ": " << line.detail
            << std::endl;
  if (!line.pass) ++failures;
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Line GradientCheck() {
  const auto start = Clock::now();
  double worst = 0.0;
  int trials = 0;
  std::string worst_kind;
  for (ExampleKind kind : kAllExampleKinds) {
    for (int i = 0; i < kGradTrialsPerKind; ++i) {
      const auto t = gradcheck::RunTrial(kind, kGradDim, 1000 + 97 * trials);
      ++trials;
      if (!(t.rel_error <= worst)) {
        worst = t.rel_error;
        worst_kind = ExampleKindName(kind);
      }
    }
  }
  const double secs = Seconds(start);
  return {worst < kGradTol && secs < kGradBudgetS,
          Fmt("%d trials at dim %d, max relative error %.3g (%s), %.1f s", trials,
              kGradDim, worst, worst_kind.c_str(), secs)};
}

// ---------------------------------------------------------------------------

// Score of every item written out from the raw tables.
std::vector<double> BruteScores(int user, const std::vector<int>& words,
                                const std::vector<ConversationVector>& conv,
                                const LambdaWeights& lambdas,
                                const ModelParams& p) {
  const int t = p.dim();
  std::vector<double> mean(t, 0.0), q(t, 0.0), ctx(t, 0.0);
  for (int w : words) {
    for (int k = 0; k < t; ++k) mean[k] += p.word_emb(w, k) / words.size();
  }
  for (int r = 0; r < t; ++r) {
    double s = p.proj_bias[r];
    for (int k = 0; k < t; ++k) s += p.proj_weight(r, k) * mean[k];
    q[r] = std::tanh(s);
  }
  for (int k = 0; k < t; ++k) {
    double c = 0.0;
    for (const auto& cv : conv) {
      c += cv.polarity == ConversationVector::Polarity::kPositive
               ? (p.slot_pos_emb(cv.slot, k) + p.value_emb(cv.value, k)) / 2
               : p.slot_neg_emb(cv.slot, k);
    }
    const double u = user == kNoUser ? 0.0 : p.user_emb(user, k);
    ctx[k] = lambdas.user * u + lambdas.query * q[k] + lambdas.conv * c;
  }
  std::vector<double> scores(p.item_emb.rows(), 0.0);
  for (int v = 0; v < p.item_emb.rows(); ++v) {
    for (int k = 0; k < t; ++k) scores[v] += p.item_emb(v, k) * ctx[k];
  }
  return scores;
}

struct RandomState {
  int user = kNoUser;
  std::vector<int> words;
  std::vector<ConversationVector> conv;
};

RandomState DrawState(const Corpus& corpus, const ModelParams& params,
                      std::mt19937_64& rng, bool allow_anonymous) {
  RandomState s;
  const Vocabulary& vocab = corpus.vocab();
  auto pick = [&](int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(rng);
  };
  s.user = allow_anonymous && pick(5) == 0 ? kNoUser : pick(corpus.num_users());
  const int nwords = 1 + pick(4);
  for (int i = 0; i < nwords; ++i) s.words.push_back(pick(vocab.num_words()));
  const int nconv = pick(6);
  for (int i = 0; i < nconv; ++i) {
    if (pick(3) == 0) {
      s.conv.push_back(ComposeNegative(pick(vocab.num_slots()), params));
    } else {
      const SlotValuePair& pr = vocab.pairs[pick(vocab.num_pairs())];
      s.conv.push_back(ComposePositive(pr.slot, pr.value, params));
    }
  }
  return s;
}

std::vector<int> Items(const std::vector<ScoredItem>& ranked) {
  std::vector<int> out;
  for (const auto& s : ranked) out.push_back(s.item);
  return out;
}

Line ExactSoftmax() {
  SyntheticConfig sc;
  sc.num_users = 400;
  sc.num_items = kSoftmaxItems;
  sc.num_slots = 30;
  sc.num_values = 240;
  sc.vocab_size = 800;
  sc.seed = 21;
  const Corpus corpus = GenerateSynthetic(sc, CorpusOptions{.min_count = 2});
  TrainConfig tc;
  tc.dim = 32;
  tc.epochs = 3;
  tc.seed = 21;
  const ModelParams params = Train(corpus, tc, LambdaWeights{});

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  int mismatches = 0;
  for (int i = 0; i < kSoftmaxStates; ++i) {
    const RandomState s = DrawState(corpus, params, rng, true);
    LambdaWeights lambdas{lam(rng), lam(rng), lam(rng)};
    const Vector q = ProjectQuery(s.words, params);
    const auto ranked =
        RankItems(s.user, q, s.conv, lambdas, params, corpus.num_items());
    const auto order = oracle::SoftmaxOrder(
        BruteScores(s.user, s.words, s.conv, lambdas, params));
    mismatches += Items(ranked) != order;
  }
  return {mismatches == 0,
          Fmt("%d states over %d items, %d ordering mismatches", kSoftmaxStates,
              corpus.num_items(), mismatches)};
}

// ---------------------------------------------------------------------------

Line StrategyOracles() {
  int mismatches = 0;
  double worst = 0.0;
  for (int i = 0; i < kStrategyInstances; ++i) {
    const auto o = strategycheck::RunInstance(5000 + i);
    mismatches += o.mismatches();
    worst = std::max(worst, o.max_err());
  }
  // One observation on a slot sharing every item with slot 1 and none with
  // slot 2.
  Matrix occ = Matrix::Zero(3, 80);
  occ.block(0, 0, 2, 40).setOnes();
  occ.block(2, 40, 1, 40).setOnes();
  const QuestionPool pool({"a", "b", "c"}, occ);
  const std::vector<AskedSlot> obs{{0, +1}};
  const auto m = GpPosterior(pool, obs, StrategyConfig{});
  const double hand =
      std::max(std::abs(m[1].mean - 0.5), std::abs(m[1].variance - 0.5));
  return {mismatches == 0 && worst <= kStrategyTol && hand <= kGpHandTol,
          Fmt("%d instances, %d argmax mismatches, max scaled error %.3g; "
              "single-observation posterior off by %.3g",
              kStrategyInstances, mismatches, worst, hand)};
}

// ---------------------------------------------------------------------------

Line MetricOracles() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int i = 0; i < kMetricRankings; ++i) {
    const int n = std::uniform_int_distribution<int>(1, 300)(rng);
    std::vector<int> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    const int r = std::uniform_int_distribution<int>(1, std::min(n, 12))(rng);
    std::vector<int> pool(n + 50);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<int> relevant(pool.begin(), pool.begin() + r);
    worst = std::max({worst,
                      std::abs(AveragePrecisionAt(ranking, relevant) -
                               oracle::Ap(ranking, relevant, 100)),
                      std::abs(ReciprocalRankAt(ranking, relevant) -
                               oracle::Rr(ranking, relevant, 100)),
                      std::abs(NdcgAt(ranking, relevant) -
                               oracle::Ndcg(ranking, relevant, 10))});
  }
  std::vector<int> ten(10);
  std::iota(ten.begin(), ten.end(), 0);
  const double ap = AveragePrecisionAt(ten, std::vector<int>{0, 2});
  const double ndcg = NdcgAt(ten, std::vector<int>{1});
  const double mrr = ReciprocalRankAt(ten, std::vector<int>{2});
  const bool hand = std::abs(ap - 0.8333) < 5e-5 &&
                    std::abs(ndcg - 0.6309) < 5e-5 && mrr == 1.0 / 3;
  return {worst <= kMetricTol && hand,
          Fmt("%d rankings, max deviation %.3g; hand cases AP=%.4f NDCG=%.4f "
              "MRR=%.4f",
              kMetricRankings, worst, ap, ndcg, mrr)};
}

// ---------------------------------------------------------------------------

const StrategyKind kInformed[] = {StrategyKind::kGbs, StrategyKind::kLinRel,
                                  StrategyKind::kGpUcb, StrategyKind::kGpEi};

struct Pipeline {
  uint64_t seed = 0;
  Corpus corpus;
  ModelParams params;
  QuestionPool pool;
  std::map<StrategyKind, std::vector<MetricsRow>> rows;  // L = 0..kConvL
};

void RunPipeline(Pipeline& p) {
  SyntheticConfig sc;
  sc.seed = p.seed;
  p.corpus = GenerateSynthetic(sc);
  TrainConfig tc;
  tc.seed = p.seed;
  p.params = Train(p.corpus, tc, LambdaWeights{});
  p.pool = QuestionPool::FromCorpus(p.corpus);
  StrategyConfig strategy;
  strategy.seed = p.seed;
  const SearchContext ctx{p.corpus, p.params, p.pool, LambdaWeights{}, strategy};
  for (StrategyKind k : {StrategyKind::kGbs, StrategyKind::kLinRel,
                         StrategyKind::kGpUcb, StrategyKind::kGpEi,
                         StrategyKind::kRandom}) {
    p.rows[k] = Evaluate(ctx, k, kConvL, p.seed);
  }
}

double MeanOver(const std::vector<Pipeline>& ps, StrategyKind k, int L,
                double MetricsRow::*field) {
  double s = 0.0;
  for (const auto& p : ps) s += p.rows.at(k)[L].*field;
  return s / ps.size();
}

Line ConversationBenefit(const std::vector<Pipeline>& ps, double secs) {
  bool pass = secs < kPipelineBudgetS;
  std::string detail;
  for (StrategyKind k : kInformed) {
    const double l0 = MeanOver(ps, k, 0, &MetricsRow::mrr);
    const double l5 = MeanOver(ps, k, kConvL, &MetricsRow::mrr);
    pass = pass && l5 >= kConvGain * l0;
    detail += Fmt("%s %.4f->%.4f (x%.2f); ", std::string(StrategyName(k)).c_str(),
                  l0, l5, l5 / l0);
  }
  detail += Fmt("%zu seeds in %.0f s", ps.size(), secs);
  return {pass, detail};
}

Line InformedVsRandom(const std::vector<Pipeline>& ps) {
  const double rmap = MeanOver(ps, StrategyKind::kRandom, kConvL, &MetricsRow::map);
  const double rinv =
      MeanOver(ps, StrategyKind::kRandom, kConvL, &MetricsRow::invalid_pct);
  bool pass = true;
  std::string detail = Fmt("random MAP %.4f invalid %.2f%%; ", rmap, rinv);
  for (StrategyKind k : kInformed) {
    const double map = MeanOver(ps, k, kConvL, &MetricsRow::map);
    const double inv = MeanOver(ps, k, kConvL, &MetricsRow::invalid_pct);
    pass = pass && map >= kInformedGain * rmap && rinv > inv;
    detail += Fmt("%s MAP %.4f (x%.2f) invalid %.2f%%; ",
                  std::string(StrategyName(k)).c_str(), map, map / rmap, inv);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// ---------------------------------------------------------------------------

// Each session receives one negative answer on the slot with the best split
// among those the target lacks, then the target's rank is compared.
Line NegativeFeedback(const Pipeline& p) {
  const SearchContext ctx{p.corpus, p.params, p.pool, LambdaWeights{},
                          StrategyConfig{}};
  std::vector<double> before, after;
  for (const TestPair& pair : p.corpus.TestPairs()) {
    for (int target : pair.relevant) {
      if (static_cast<int>(before.size()) == kNegativeSessions) break;
      const Item& item = p.corpus.items()[target];
      std::vector<bool> carried(p.pool.num_slots(), false);
      for (const Annotation& a : item.annotations) carried[a.slot] = true;
      Session s = StartSession(ctx, pair.user,
                               p.corpus.queries()[pair.query].word_ids,
                               StrategyKind::kGbs, 1);
      const auto pi = PreferenceVector(s.RankedItems(), p.corpus.num_items());
      const auto objective = GbsObjectives(pi, p.pool);
      const int slot = ArgmaxWithTies(objective, carried);
      if (slot < 0) continue;
      const SimulatedUser sim{target};
      if (SimulateAnswer(sim, p.corpus, slot).kind != FeedbackKind::kNegative) {
        continue;
      }
      before.push_back(s.RankOf(target));
      s.pending_slot = slot;
      ApplyFeedback(ctx, s, slot, Feedback::Negative());
      after.push_back(s.RankOf(target));
    }
  }
  const int n = static_cast<int>(before.size());
  if (n < kNegativeSessions) {
    return {false, Fmt("only %d sessions could be built", n)};
  }
  double mean_b = 0, mean_a = 0, mean_d = 0;
  for (int i = 0; i < n; ++i) {
    mean_b += before[i] / n;
    mean_a += after[i] / n;
    mean_d += (after[i] - before[i]) / n;
  }
  double var = 0;
  for (int i = 0; i < n; ++i) {
    const double d = after[i] - before[i] - mean_d;
    var += d * d / (n - 1);
  }
  // One-sided: H1 says the negative turn pushes the target down.
  double p_worse = mean_d > 0 ? 0.0 : 1.0;
  double t = 0.0;
  if (var > 0) {
    t = mean_d / std::sqrt(var / n);
    boost::math::students_t dist(n - 1);
    p_worse = boost::math::cdf(boost::math::complement(dist, t));
  }
  return {p_worse >= kAlpha,
          Fmt("%d sessions, mean zero-based rank %.2f before, %.2f after, "
              "paired t=%.3f, one-sided p(worse)=%.3g",
              n, mean_b, mean_a, t, p_worse)};
}

// ---------------------------------------------------------------------------

Line DegenerateModes(const Pipeline& p) {
  std::mt19937_64 rng(41);
  int user_diffs = 0, conv_diffs = 0;
  const int n = p.corpus.num_items();
  for (int i = 0; i < kDegenerateStates; ++i) {
    RandomState s = DrawState(p.corpus, p.params, rng, false);
    if (s.conv.empty()) s.conv.push_back(ComposeNegative(0, p.params));
    const Vector q = ProjectQuery(s.words, p.params);
    const int other = (s.user + 1 + i) % p.corpus.num_users();

    const LambdaWeights no_user{0.0, 1.0, 1.0};
    const auto a = RankItems(s.user, q, s.conv, no_user, p.params, n);
    const auto b = RankItems(other, q, s.conv, no_user, p.params, n);
    const auto c = RankItems(kNoUser, q, s.conv, no_user, p.params, n);
    for (int j = 0; j < n; ++j) {
      user_diffs += a[j].item != b[j].item || a[j].score != b[j].score ||
                    a[j].item != c[j].item || a[j].score != c[j].score;
    }

    const LambdaWeights no_conv{1.0, 1.0, 0.0};
    const auto d = RankItems(s.user, q, s.conv, no_conv, p.params, n);
    const auto e = RankItems(s.user, q, {}, no_conv, p.params, n);
    for (int j = 0; j < n; ++j) {
      conv_diffs += d[j].item != e[j].item || d[j].score != e[j].score;
    }
  }
  return {user_diffs == 0 && conv_diffs == 0,
          Fmt("%d states; lambda_u=0 differing positions across users %d, "
              "lambda_c=0 differing positions with/without conversation %d",
              kDegenerateStates, user_diffs, conv_diffs)};
}

// ---------------------------------------------------------------------------

std::string Quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

int RunCli(const std::string& cli, const std::vector<std::string>& args,
           const fs::path& out) {
  std::string cmd = Quote(cli);
  for (const auto& a : args) cmd += " " + Quote(a);
  cmd += " >" + Quote(out.string()) + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Epoch lines without their wall-clock field.
std::string EpochLines(const fs::path& path) {
  std::istringstream in(testutil::ReadFile(path));
  std::string line, out;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    j.erase("wall_ms");
    out += j.dump() + "\n";
  }
  return out;
}

std::string DirContents(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    all += f.filename().string() + "\n" + testutil::ReadFile(f);
  }
  return all;
}

Line Determinism(const std::string& cli) {
  testutil::TempDir dir;
  const fs::path d = dir.path();
  const std::vector<std::string> small{
      "--users", "200", "--items", "80", "--queries", "8", "--slots", "18",
      "--values", "90", "--vocab", "400", "--seed", "17"};
  std::vector<std::string> failed;
  int codes = 0;
  std::string model_args_a, model_args_b;
  for (const char* run : {"a", "b"}) {
    const fs::path r = d / run;
    fs::create_directories(r);
    auto gen = std::vector<std::string>{"gen-corpus", "--out", (r / "corpus").string()};
    gen.insert(gen.end(), small.begin(), small.end());
    codes |= RunCli(cli, gen, r / "gen.out");
    codes |= RunCli(cli, {"train", "--corpus", (r / "corpus").string(), "--out",
                          (r / "model.bin").string(), "--epochs", "3", "--dim",
                          "24", "--min-count", "2", "--seed", "5"},
                    r / "train.out");
    const std::vector<std::string> model{"--model", (r / "model.bin").string(),
                                         "--corpus", (r / "corpus").string(),
                                         "--min-count", "2"};
    auto eval = std::vector<std::string>{"eval"};
    eval.insert(eval.end(), model.begin(), model.end());
    eval.insert(eval.end(), {"--L", "0..3", "--seeds", "2"});
    codes |= RunCli(cli, eval, r / "eval.csv");
  }
  const fs::path a = d / "a", b = d / "b";
  if (DirContents(a / "corpus") != DirContents(b / "corpus")) failed.push_back("gen-corpus");
  if (testutil::ReadFile(a / "model.bin") != testutil::ReadFile(b / "model.bin") ||
      EpochLines(a / "train.out") != EpochLines(b / "train.out")) {
    failed.push_back("train");
  }
  if (testutil::ReadFile(a / "eval.csv") != testutil::ReadFile(b / "eval.csv")) {
    failed.push_back("eval");
  }

  // simulate against run a, twice, for the first test interaction.
  const Corpus corpus = IngestCorpus(a / "corpus", CorpusOptions{.min_count = 2});
  const TestPair pair = corpus.TestPairs().front();
  const std::vector<std::string> sim{
      "simulate", "--model", (a / "model.bin").string(), "--corpus",
      (a / "corpus").string(), "--min-count", "2", "--user",
      corpus.users()[pair.user].user_id, "--query",
      corpus.queries()[pair.query].text, "--target",
      corpus.items()[pair.relevant.front()].item_id, "--strategy", "gp-ei"};
  codes |= RunCli(cli, sim, d / "sim1.out");
  codes |= RunCli(cli, sim, d / "sim2.out");
  if (testutil::ReadFile(d / "sim1.out") != testutil::ReadFile(d / "sim2.out")) {
    failed.push_back("simulate");
  }
  if (codes != 0) failed.push_back("nonzero exit");
  std::string detail = "gen-corpus, train, eval, simulate repeated under fixed seeds";
  if (!failed.empty()) {
    detail += "; differing:";
    for (const auto& f : failed) detail += " " + f;
  } else {
    detail += "; outputs byte-identical";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConvPS acceptance suite"};
  std::string cli;
  app.add_option("--cli", cli, "path to the convps binary")->required();
  CLI11_PARSE(app, argc, argv);

  Report("gradient-check", GradientCheck());
  Report("exact-softmax-oracle", ExactSoftmax());
  Report("strategy-oracles", StrategyOracles());
  Report("metric-oracles", MetricOracles());
  Report("determinism", Determinism(cli));

  std::vector<Pipeline> pipelines;
  const auto pipeline_start = Clock::now();
  for (uint64_t seed : kPipelineSeeds) {
    pipelines.push_back(Pipeline{.seed = seed});
    RunPipeline(pipelines.back());
  }
  const double pipeline_secs = Seconds(pipeline_start);
  Report("conversation-benefit", ConversationBenefit(pipelines, pipeline_secs));
  Report("informed-vs-random", InformedVsRandom(pipelines));
  Report("negative-feedback", NegativeFeedback(pipelines.front()));
  Report("degenerate-modes", DegenerateModes(pipelines.front()));

  std::cout << (failures == 0 ? "ALL PASS" : Fmt("%d FAILED", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
