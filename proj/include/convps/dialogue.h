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

#ifndef CONVPS_DIALOGUE_H_
#define CONVPS_DIALOGUE_H_

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "convps/ask.h"
#include "convps/corpus.h"
#include "convps/model.h"

namespace convps {

// Shared read-only state a conversation runs against.
struct SearchContext {
  const Corpus& corpus;
  const ModelParams& params;
  const QuestionPool& pool;
  LambdaWeights lambdas;
  StrategyConfig strategy;
};

enum class FeedbackKind { kPositive, kNegative, kInvalid };
std::string_view FeedbackKindName(FeedbackKind kind);

struct Feedback {
  FeedbackKind kind = FeedbackKind::kInvalid;
  int value = -1;  // set for positive feedback

  static Feedback Positive(int value) { return {FeedbackKind::kPositive, value}; }
  static Feedback Negative() { return {FeedbackKind::kNegative, -1}; }
  static Feedback Invalid() { return {FeedbackKind::kInvalid, -1}; }
};

struct Turn {
  int slot = -1;
  Feedback feedback;
};

struct Session {
  int user = kNoUser;
  std::vector<int> query_words;
  Vector query_vec;
  AskState ask;
  std::vector<ConversationVector> accepted;
  std::vector<Turn> transcript;
  std::vector<ScoredItem> ranking;  // full, best first
  int pending_slot = -1;            // asked and not yet answered

  int rounds() const { return static_cast<int>(transcript.size()); }
  std::vector<int> RankedItems() const;
  // Zero-based position of `item` in the ranking.
  int RankOf(int item) const;
};

// `user` may be kNoUser. Throws NotFound for an unknown user and
// InvalidArgument when no query word is in the vocabulary.
Session StartSession(const SearchContext& ctx, int user,
                     std::vector<int> query_words, StrategyKind strategy,
                     uint64_t seed);

// Picks the next slot and marks it pending. Throws FailedPrecondition when a
// question is already pending or no slot is left.
int AskNext(const SearchContext& ctx, Session& session);
bool PoolExhausted(const Session& session);

// Answers the pending question. Throws FailedPrecondition when `slot` is not
// the pending one.
void ApplyFeedback(const SearchContext& ctx, Session& session, int slot,
                   const Feedback& feedback);

void RecomputeRanking(const SearchContext& ctx, Session& session);

struct SimulatedUser {
  int target = -1;

  // Throws InvalidArgument when the item carries no known slot.
  static SimulatedUser ForItem(const Corpus& corpus, int item);
};

// Value of the target for `slot` when known, negative when the target lacks
// the slot, invalid when the target's value never occurred in training.
Feedback SimulateAnswer(const SimulatedUser& user, const Corpus& corpus,
                        int slot);

struct RoundRecord {
  int round = 0;
  int slot = -1;  // -1 for round 0
  FeedbackKind feedback = FeedbackKind::kInvalid;
  int target_rank = 0;
  double mrr_so_far = 0.0;  // mean of 1/(rank+1) over rounds 0..round
};

struct Trajectory {
  std::vector<RoundRecord> rounds;  // rounds[0] is the initial ranking
};

using RoundCallback = std::function<void(const Session&)>;

// Asks and answers up to l_max questions, stopping early when the pool runs
// out. `on_round` sees the session after round 0 and after every answer.
Trajectory RunConversation(const SearchContext& ctx, const SimulatedUser& user,
                           Session& session, int l_max,
                           const RoundCallback& on_round = {});

// One JSON object per line.
std::string TrajectoryJsonl(const Trajectory& trajectory,
                            const QuestionPool& pool);

// "what <slot> would you like?"
std::string QuestionPrompt(std::string_view slot_name);

}  // namespace convps

#endif  // CONVPS_DIALOGUE_H_
