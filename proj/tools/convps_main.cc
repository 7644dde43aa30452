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

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "convps/ask.h"
#include "convps/checkpoint.h"
#include "convps/corpus.h"
#include "convps/dialogue.h"
#include "convps/error.h"
#include "convps/eval.h"
#include "convps/service.h"
#include "convps/synthetic.h"
#include "convps/training.h"
#include "httplib.h"
#include "json.hpp"

namespace {

using convps::InvalidArgument;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Globals {
  uint64_t seed = 1;
  bool verbose = false;
};

struct ModelFlags {
  std::string model;
  std::string corpus;
  convps::CorpusOptions corpus_options;
  convps::LambdaWeights lambdas;
  convps::StrategyConfig strategy;
};

void AddCorpusOptions(CLI::App* cmd, convps::CorpusOptions& o) {
  cmd->add_option("--min-count", o.min_count, "drop words rarer than this")
      ->capture_default_str();
  cmd->add_option("--min-pair-count", o.min_pair_count,
                  "slot-value pairs on fewer training items are unseen")
      ->capture_default_str();
}

void AddLambdas(CLI::App* cmd, convps::LambdaWeights& l) {
  cmd->add_option("--lambda-u", l.user)->capture_default_str();
  cmd->add_option("--lambda-q", l.query)->capture_default_str();
  cmd->add_option("--lambda-c", l.conv)->capture_default_str();
}

void AddStrategyConfig(CLI::App* cmd, convps::StrategyConfig& s) {
  cmd->add_option("--c", s.c, "LinRel exploration weight")->capture_default_str();
  cmd->add_option("--beta", s.beta, "UCB exploration weight")->capture_default_str();
  cmd->add_option("--lambda-i", s.lambda_i, "LinRel ridge")->capture_default_str();
  cmd->add_option("--kernel-sigma2", s.kernel_sigma2)->capture_default_str();
  cmd->add_option("--noise-sigma2", s.noise_sigma2)->capture_default_str();
  cmd->add_option("--gp-init", s.gp_init_t0, "GBS picks before the GP")
      ->capture_default_str();
}

void AddModelFlags(CLI::App* cmd, ModelFlags& f, bool required) {
  auto* m = cmd->add_option("--model", f.model, "checkpoint path");
  auto* c = cmd->add_option("--corpus", f.corpus, "corpus directory");
  if (required) {
    m->required();
    c->required();
  }
  AddCorpusOptions(cmd, f.corpus_options);
  AddLambdas(cmd, f.lambdas);
  AddStrategyConfig(cmd, f.strategy);
}

ordered_json LambdasJson(const convps::LambdaWeights& l) {
  return {{"user", l.user}, {"query", l.query}, {"conv", l.conv}};
}

ordered_json StrategyJson(const convps::StrategyConfig& s) {
  return {{"c", s.c},
          {"beta", s.beta},
          {"lambda_i", s.lambda_i},
          {"kernel_sigma2", s.kernel_sigma2},
          {"noise_sigma2", s.noise_sigma2},
          {"gp_init_t0", s.gp_init_t0},
          {"seed", s.seed}};
}

void PrintConfig(const std::string& command, const ordered_json& config) {
  ordered_json j;
  j["command"] = command;
  j["config"] = config;
  std::cerr << j.dump() << std::endl;
}

struct LoadedModel {
  convps::Corpus corpus;
  convps::Checkpoint checkpoint;
  convps::QuestionPool pool;
};

LoadedModel Load(const ModelFlags& f) {
  if (!std::filesystem::exists(f.model)) {
    throw InvalidArgument("model not found: " + f.model);
  }
  LoadedModel m;
  m.corpus = convps::IngestCorpus(f.corpus, f.corpus_options);
  m.checkpoint = convps::ReadCheckpoint(f.model);
  convps::CheckCheckpointMatches(m.checkpoint, m.corpus);
  m.pool = convps::QuestionPool::FromCorpus(m.corpus);
  return m;
}

std::vector<int> ParseLRange(const std::string& text) {
  std::vector<int> out;
  auto parse_int = [&](const std::string& s) {
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || v < 0) {
      throw CLI::ValidationError("--L", "bad value '" + s + "'");
    }
    return v;
  };
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const size_t dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_int(part));
      continue;
    }
    const int lo = parse_int(part.substr(0, dots));
    const int hi = parse_int(part.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("--L", "empty range '" + part + "'");
    for (int l = lo; l <= hi; ++l) out.push_back(l);
  }
  if (out.empty()) throw CLI::ValidationError("--L", "no values");
  return out;
}

std::vector<convps::StrategyKind> ParseStrategies(const std::string& text) {
  std::vector<convps::StrategyKind> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(convps::ParseStrategy(part));
  if (out.empty()) throw InvalidArgument("no strategies given");
  return out;
}

std::string EnvOr(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

// ---- gen-corpus ----

struct GenFlags {
  std::string out;
  convps::SyntheticConfig config;
};

int RunGen(const GenFlags& f, const Globals& g) {
  convps::SyntheticConfig c = f.config;
  c.seed = g.seed;
  c.Validate();
  PrintConfig("gen-corpus",
              {{"out", f.out},
               {"users", c.num_users},
               {"items", c.num_items},
               {"queries", c.num_queries},
               {"slots", c.num_slots},
               {"values", c.num_values},
               {"vocab", c.vocab_size},
               {"tokens_per_item", c.tokens_per_item},
               {"tokens_per_user", c.tokens_per_user},
               {"pairs_per_item", c.pairs_per_item},
               {"interactions", c.interactions_per_user},
               {"strength", c.structure_strength},
               {"test_fraction", c.test_fraction},
               {"seed", c.seed}});
  const convps::CorpusRecords records = convps::GenerateSyntheticRecords(c);
  std::error_code ec;
  std::filesystem::create_directories(f.out, ec);
  if (ec) throw InvalidArgument("cannot create " + f.out + ": " + ec.message());
  try {
    convps::WriteCorpusRecords(records, f.out);
  } catch (const std::exception& e) {
    throw InvalidArgument(e.what());
  }
  return kExitOk;
}

// ---- train ----

struct TrainFlags {
  std::string corpus;
  std::string out;
  convps::CorpusOptions corpus_options;
  convps::TrainConfig train;
  convps::LambdaWeights lambdas;
};

int RunTrain(const TrainFlags& f, const Globals& g) {
  convps::TrainConfig tc = f.train;
  tc.seed = g.seed;
  tc.Validate();
  f.lambdas.Validate();
  PrintConfig("train", {{"corpus", f.corpus},
                        {"out", f.out},
                        {"min_count", f.corpus_options.min_count},
                        {"min_pair_count", f.corpus_options.min_pair_count},
                        {"epochs", tc.epochs},
                        {"batch", tc.batch_size},
                        {"lr", tc.lr0},
                        {"clip", tc.clip_norm},
                        {"neg", tc.neg_samples},
                        {"gamma", tc.l2_gamma},
                        {"subsample", tc.subsample_t},
                        {"max_neg_slots", tc.max_neg_slots},
                        {"dim", tc.dim},
                        {"seed", tc.seed},
                        {"lambdas", LambdasJson(f.lambdas)}});
  const convps::Corpus corpus = convps::IngestCorpus(f.corpus, f.corpus_options);
  const convps::ModelParams params = convps::Train(
      corpus, tc, f.lambdas, [&](const convps::EpochStats& s) {
        ordered_json j;
        j["epoch"] = s.epoch;
        j["mean_loss"] = s.mean_loss;
        j["lr"] = s.lr;
        j["wall_ms"] = s.wall_ms;
        if (g.verbose) j["examples"] = s.examples;
        std::cout << j.dump() << std::endl;
      });
  if (!params.AllFinite()) {
    throw convps::FailedPrecondition("training diverged (non-finite parameters)");
  }
  convps::WriteCheckpoint(f.out, params, convps::CheckpointVocab::FromCorpus(corpus));
  return kExitOk;
}

// ---- eval ----

struct EvalFlags {
  ModelFlags model;
  std::string strategies = "gbs,linrel,gp-ucb,gp-ei,random";
  std::string l_range = "0..10";
  int seeds = 3;
  std::string out;
};

int RunEval(const EvalFlags& f, const Globals& g) {
  const auto strategies = ParseStrategies(f.strategies);
  const auto ls = ParseLRange(f.l_range);
  if (f.seeds < 1) throw InvalidArgument("--seeds must be >= 1");
  ModelFlags mf = f.model;
  mf.strategy.seed = g.seed;
  mf.lambdas.Validate();
  mf.strategy.Validate();
  std::vector<uint64_t> seeds;
  for (int i = 0; i < f.seeds; ++i) seeds.push_back(g.seed + i);
  PrintConfig("eval", {{"model", mf.model},
                       {"corpus", mf.corpus},
                       {"strategies", f.strategies},
                       {"L", ls},
                       {"seeds", seeds},
                       {"out", f.out},
                       {"lambdas", LambdasJson(mf.lambdas)},
                       {"strategy", StrategyJson(mf.strategy)}});
  const LoadedModel m = Load(mf);
  const convps::SearchContext ctx{m.corpus, m.checkpoint.params, m.pool,
                                  mf.lambdas, mf.strategy};
  const std::string csv = convps::MetricsCsv(convps::Sweep(ctx, strategies, ls, seeds));
  if (f.out.empty() || f.out == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(f.out, std::ios::binary);
    out << csv;
    if (!out) throw std::runtime_error("cannot write " + f.out);
  }
  return kExitOk;
}

// ---- simulate ----

struct SimFlags {
  ModelFlags model;
  std::string user;
  std::string query;
  std::string target;
  std::string strategy = "linrel";
  int l_max = 5;
  std::string jsonl;
};

int RunSimulate(const SimFlags& f, const Globals& g) {
  const convps::StrategyKind kind = convps::ParseStrategy(f.strategy);
  if (f.l_max < 0) throw InvalidArgument("--L must be >= 0");
  ModelFlags mf = f.model;
  mf.strategy.seed = g.seed;
  mf.lambdas.Validate();
  mf.strategy.Validate();
  PrintConfig("simulate", {{"model", mf.model},
                           {"corpus", mf.corpus},
                           {"user", f.user},
                           {"query", f.query},
                           {"target", f.target},
                           {"strategy", f.strategy},
                           {"L", f.l_max},
                           {"lambdas", LambdasJson(mf.lambdas)},
                           {"strategy_config", StrategyJson(mf.strategy)}});
  const LoadedModel m = Load(mf);
  const int user = m.corpus.FindUser(f.user);
  if (user < 0) throw convps::NotFound("unknown user '" + f.user + "'");
  const int target = m.corpus.FindItem(f.target);
  if (target < 0) throw convps::NotFound("unknown item '" + f.target + "'");
  std::vector<int> words = m.corpus.EncodeText(f.query);
  if (words.empty()) throw InvalidArgument("query has no known words");

  const convps::SearchContext ctx{m.corpus, m.checkpoint.params, m.pool,
                                  mf.lambdas, mf.strategy};
  const auto sim = convps::SimulatedUser::ForItem(m.corpus, target);
  convps::Session session =
      convps::StartSession(ctx, user, std::move(words), kind, g.seed);
  const convps::Trajectory t = convps::RunConversation(ctx, sim, session, f.l_max);

  std::printf("%-5s  %-36s  %-24s  %s\n", "round", "question", "answer",
              "target_rank");
  for (const convps::RoundRecord& r : t.rounds) {
    std::string question = "-";
    std::string answer = "-";
    if (r.slot >= 0) {
      question = convps::QuestionPrompt(m.pool.slot_name(r.slot));
      const convps::Turn& turn = session.transcript[r.round - 1];
      switch (turn.feedback.kind) {
        case convps::FeedbackKind::kPositive:
          answer = m.corpus.vocab().values[turn.feedback.value];
          break;
        case convps::FeedbackKind::kNegative:
          answer = "(not relevant)";
          break;
        case convps::FeedbackKind::kInvalid:
          answer = "(invalid)";
          break;
      }
    }
    std::printf("%-5d  %-36s  %-24s  %d\n", r.round, question.c_str(),
                answer.c_str(), r.target_rank);
  }
  if (!f.jsonl.empty()) {
    std::ofstream out(f.jsonl, std::ios::binary);
    out << convps::TrajectoryJsonl(t, m.pool);
    if (!out) throw std::runtime_error("cannot write " + f.jsonl);
  }
  return kExitOk;
}

// ---- serve ----

struct ServeFlags {
  ModelFlags model;
  std::string addr = ":8080";
  std::string strategy = "linrel";
  bool demo = false;
  int top_k = 10;
  double ttl_s = 1800.0;
};

int RunServe(ServeFlags f, const Globals& g) {
  f.model.model = f.model.model.empty() ? EnvOr("CONVPS_MODEL", "") : f.model.model;
  f.model.corpus = f.model.corpus.empty() ? EnvOr("CONVPS_CORPUS", "") : f.model.corpus;
  if (f.model.model.empty() || f.model.corpus.empty()) {
    throw InvalidArgument("--model and --corpus (or CONVPS_MODEL, CONVPS_CORPUS) are required");
  }
  convps::ServiceConfig sc;
  sc.model_path = f.model.model;
  sc.corpus_path = f.model.corpus;
  sc.strategy = convps::ParseStrategy(f.strategy);
  sc.lambdas = f.model.lambdas;
  sc.strategy_config = f.model.strategy;
  sc.strategy_config.seed = g.seed;
  sc.top_k = f.top_k;
  sc.session_ttl_s = f.ttl_s;
  sc.demo_mode = f.demo;
  convps::ParseListenAddress(f.addr, sc);
  sc.Validate();
  PrintConfig("serve", {{"model", sc.model_path},
                        {"corpus", sc.corpus_path},
                        {"addr", sc.host + ":" + std::to_string(sc.port)},
                        {"strategy", f.strategy},
                        {"demo", sc.demo_mode},
                        {"top_k", sc.top_k},
                        {"ttl_s", sc.session_ttl_s},
                        {"lambdas", LambdasJson(sc.lambdas)},
                        {"strategy_config", StrategyJson(sc.strategy_config)}});
  const LoadedModel m = Load(f.model);
  convps::ConvService service(m.corpus, m.checkpoint.params, m.pool, sc);

  // Signals go to a dedicated waiter thread so shutdown runs outside a
  // handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  // An inherited SIG_IGN would discard the signal before sigwait sees it.
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  httplib::Server server;
  // httplib defaults to SO_REUSEPORT, which would let a second instance share
  // the port silently.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  service.Register(server);
  if (!server.bind_to_port(sc.host, sc.port)) {
    throw InvalidArgument("cannot listen on " + sc.host + ":" + std::to_string(sc.port));
  }
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  std::cerr << "listening on " << sc.host << ":" << sc.port << std::endl;
  server.listen_after_bind();
  if (waiter.joinable()) {
    // listen returned without a signal (e.g. socket error): wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational product search"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_flag("--verbose", g.verbose, "extra log fields");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic corpus");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  auto& sc = gen.config;
  gen_cmd->add_option("--users", sc.num_users)->capture_default_str();
  gen_cmd->add_option("--items", sc.num_items)->capture_default_str();
  gen_cmd->add_option("--queries", sc.num_queries)->capture_default_str();
  gen_cmd->add_option("--slots", sc.num_slots)->capture_default_str();
  gen_cmd->add_option("--values", sc.num_values)->capture_default_str();
  gen_cmd->add_option("--vocab", sc.vocab_size)->capture_default_str();
  gen_cmd->add_option("--tokens-per-item", sc.tokens_per_item)->capture_default_str();
  gen_cmd->add_option("--tokens-per-user", sc.tokens_per_user)->capture_default_str();
  gen_cmd->add_option("--pairs-per-item", sc.pairs_per_item)->capture_default_str();
  gen_cmd->add_option("--interactions", sc.interactions_per_user)->capture_default_str();
  gen_cmd->add_option("--strength", sc.structure_strength)->capture_default_str();
  gen_cmd->add_option("--test-fraction", sc.test_fraction)->capture_default_str();

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "train a model checkpoint");
  train_cmd->add_option("--corpus", tr.corpus, "corpus directory")->required();
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tr.train.lr0)->capture_default_str();
  train_cmd->add_option("--dim", tr.train.dim)->capture_default_str();
  train_cmd->add_option("--neg", tr.train.neg_samples)->capture_default_str();
  train_cmd->add_option("--gamma", tr.train.l2_gamma)->capture_default_str();
  train_cmd->add_option("--clip", tr.train.clip_norm)->capture_default_str();
  train_cmd->add_option("--subsample", tr.train.subsample_t)->capture_default_str();
  train_cmd->add_option("--max-neg-slots", tr.train.max_neg_slots)->capture_default_str();
  AddCorpusOptions(train_cmd, tr.corpus_options);
  AddLambdas(train_cmd, tr.lambdas);

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "sweep strategies and question counts");
  AddModelFlags(eval_cmd, ev.model, true);
  eval_cmd->add_option("--strategies", ev.strategies)->capture_default_str();
  eval_cmd->add_option("--L", ev.l_range, "e.g. 5, 0..10 or 0,5,10")->capture_default_str();
  eval_cmd->add_option("--seeds", ev.seeds, "number of seeds from --seed")
      ->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "CSV path (default stdout)");

  SimFlags sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run one simulated session");
  AddModelFlags(sim_cmd, sim.model, true);
  sim_cmd->add_option("--user", sim.user)->required();
  sim_cmd->add_option("--query", sim.query)->required();
  sim_cmd->add_option("--target", sim.target)->required();
  sim_cmd->add_option("--strategy", sim.strategy)->capture_default_str();
  sim_cmd->add_option("--L", sim.l_max)->capture_default_str();
  sim_cmd->add_option("--jsonl", sim.jsonl, "write the per-round trajectory here");

  ServeFlags sv;
  sv.addr = EnvOr("CONVPS_ADDR", sv.addr);
  sv.strategy = EnvOr("CONVPS_STRATEGY", sv.strategy);
  auto* serve_cmd = app.add_subcommand("serve", "serve live sessions over HTTP");
  AddModelFlags(serve_cmd, sv.model, false);
  serve_cmd->add_option("--addr", sv.addr)->capture_default_str();
  serve_cmd->add_option("--strategy", sv.strategy)->capture_default_str();
  serve_cmd->add_flag("--demo", sv.demo, "reveal the target rank");
  serve_cmd->add_option("--top-k", sv.top_k)->capture_default_str();
  serve_cmd->add_option("--ttl", sv.ttl_s, "session TTL in seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return RunGen(gen, g);
    if (train_cmd->parsed()) return RunTrain(tr, g);
    if (eval_cmd->parsed()) return RunEval(ev, g);
    if (sim_cmd->parsed()) return RunSimulate(sim, g);
    if (serve_cmd->parsed()) return RunServe(sv, g);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
