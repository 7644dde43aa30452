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

#include "convps/dialogue.h"

#include <algorithm>

#include "convps/error.h"
#include "json.hpp"

namespace convps {

std::string_view FeedbackKindName(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::kPositive: return "positive";
    case FeedbackKind::kNegative: return "negative";
    case FeedbackKind::kInvalid: return "invalid";
  }
  return "invalid";
}

std::vector<int> Session::RankedItems() const {
  std::vector<int> out;
  out.reserve(ranking.size());
  for (const ScoredItem& s : ranking) out.push_back(s.item);
  return out;
}

int Session::RankOf(int item) const {
  for (size_t k = 0; k < ranking.size(); ++k) {
    if (ranking[k].item == item) return static_cast<int>(k);
  }
  throw NotFound("item " + std::to_string(item) + " not in ranking");
}

void RecomputeRanking(const SearchContext& ctx, Session& session) {
  session.ranking = RankItems(session.user, session.query_vec, session.accepted,
                              ctx.lambdas, ctx.params, 0);
}

Session StartSession(const SearchContext& ctx, int user,
                     std::vector<int> query_words, StrategyKind strategy,
                     uint64_t seed) {
  if (user != kNoUser && (user < 0 || user >= ctx.params.user_emb.rows())) {
    throw NotFound("unknown user id " + std::to_string(user));
  }
  Session s;
  s.user = user;
  s.query_words = std::move(query_words);
  s.query_vec = ProjectQuery(s.query_words, ctx.params);
  s.ask = AskState(strategy, ctx.pool.num_slots(), seed);
  RecomputeRanking(ctx, s);
  return s;
}

bool PoolExhausted(const Session& session) {
  return session.ask.num_available() <= 0;
}

int AskNext(const SearchContext& ctx, Session& session) {
  if (session.pending_slot >= 0) {
    throw FailedPrecondition("a question is already pending");
  }
  const std::vector<double> pi =
      session.ask.kind() == StrategyKind::kRandom
          ? std::vector<double>(ctx.pool.num_items(), 0.0)
          : PreferenceVector(session.RankedItems(), ctx.pool.num_items());
  session.pending_slot = NextQuestion(session.ask, ctx.pool, pi, ctx.strategy);
  return session.pending_slot;
}

void ApplyFeedback(const SearchContext& ctx, Session& session, int slot,
                   const Feedback& feedback) {
  if (session.pending_slot < 0) {
    throw FailedPrecondition("no question is pending");
  }
  if (slot != session.pending_slot) {
    throw FailedPrecondition("answer is for slot " + std::to_string(slot) +
                             " but slot " +
                             std::to_string(session.pending_slot) + " is pending");
  }
  switch (feedback.kind) {
    case FeedbackKind::kPositive:
      session.accepted.push_back(ComposePositive(slot, feedback.value, ctx.params));
      session.ask.Record(slot, +1);
      break;
    case FeedbackKind::kNegative:
      session.accepted.push_back(ComposeNegative(slot, ctx.params));
      session.ask.Record(slot, -1);
      break;
    case FeedbackKind::kInvalid:
      session.ask.Record(slot, -1);
      break;
  }
  session.transcript.push_back({slot, feedback});
  session.pending_slot = -1;
  if (feedback.kind != FeedbackKind::kInvalid) RecomputeRanking(ctx, session);
}

SimulatedUser SimulatedUser::ForItem(const Corpus& corpus, int item) {
  if (item < 0 || item >= corpus.num_items()) {
    throw NotFound("unknown item id " + std::to_string(item));
  }
  if (corpus.items()[item].annotations.empty()) {
    throw InvalidArgument("target item " + corpus.items()[item].item_id +
                          " has no known slot");
  }
  return {item};
}

Feedback SimulateAnswer(const SimulatedUser& user, const Corpus& corpus,
                        int slot) {
  if (slot < 0 || slot >= corpus.vocab().num_slots()) {
    throw InvalidArgument("unknown slot id " + std::to_string(slot));
  }
  const Annotation* a = corpus.items()[user.target].FindAnnotation(slot);
  if (a == nullptr) return Feedback::Negative();
  if (a->value < 0) return Feedback::Invalid();
  return Feedback::Positive(a->value);
}

Trajectory RunConversation(const SearchContext& ctx, const SimulatedUser& user,
                           Session& session, int l_max,
                           const RoundCallback& on_round) {
  Trajectory t;
  double rr_sum = 0.0;
  auto record = [&](int slot, FeedbackKind kind) {
    RoundRecord r;
    r.round = static_cast<int>(t.rounds.size());
    r.slot = slot;
    r.feedback = kind;
    r.target_rank = session.RankOf(user.target);
    rr_sum += 1.0 / (r.target_rank + 1);
    r.mrr_so_far = rr_sum / (r.round + 1);
    t.rounds.push_back(r);
    if (on_round) on_round(session);
  };
  record(-1, FeedbackKind::kInvalid);
  for (int l = 0; l < l_max && !PoolExhausted(session); ++l) {
    const int slot = AskNext(ctx, session);
    const Feedback fb = SimulateAnswer(user, ctx.corpus, slot);
    ApplyFeedback(ctx, session, slot, fb);
    record(slot, fb.kind);
  }
  return t;
}

std::string TrajectoryJsonl(const Trajectory& trajectory,
                            const QuestionPool& pool) {
  std::string out;
  for (const RoundRecord& r : trajectory.rounds) {
    nlohmann::ordered_json j;
    j["round"] = r.round;
    if (r.slot >= 0) {
      j["slot"] = pool.slot_name(r.slot);
      j["feedback"] = FeedbackKindName(r.feedback);
    } else {
      j["slot"] = nullptr;
      j["feedback"] = nullptr;
    }
    j["target_rank"] = r.target_rank;
    j["mrr_so_far"] = r.mrr_so_far;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string QuestionPrompt(std::string_view slot_name) {
  return "what " + std::string(slot_name) + " would you like?";
}

}  // namespace convps
