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

#ifndef CONVPS_CORPUS_H_
#define CONVPS_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace convps {

enum class Split { kTrain, kTest };

std::string_view SplitName(Split split);

// Records exactly as stored in the four corpus files. Serialization works on
// these so that a corpus round-trips byte-for-byte.
struct UserRecord {
  std::string user_id;
  std::string review_text;
};

struct ItemRecord {
  std::string item_id;
  std::string title;
  std::string description;
  std::vector<std::string> reviews;
  std::vector<std::pair<std::string, std::string>> pairs;  // (slot, value)
};

struct QueryRecord {
  std::string query_id;
  std::string query_text;
};

struct InteractionRecord {
  std::string user_id;
  std::string query_id;
  std::string item_id;
  Split split = Split::kTrain;
};

struct CorpusRecords {
  std::vector<UserRecord> users;
  std::vector<ItemRecord> items;
  std::vector<QueryRecord> queries;
  std::vector<InteractionRecord> interactions;
};

inline constexpr std::string_view kUsersFile = "users.jsonl";
inline constexpr std::string_view kItemsFile = "items.jsonl";
inline constexpr std::string_view kQueriesFile = "queries.jsonl";
inline constexpr std::string_view kInteractionsFile = "interactions.jsonl";

// Parses the four files. Throws InvalidArgument naming file and line on
// malformed input, and on duplicate or dangling ids.
CorpusRecords ReadCorpusRecords(const std::filesystem::path& dir);
void WriteCorpusRecords(const CorpusRecords& records,
                        const std::filesystem::path& dir);
// The exact bytes WriteCorpusRecords puts in each file, in file order.
std::vector<std::pair<std::string, std::string>> SerializeCorpusRecords(
    const CorpusRecords& records);

struct SlotValuePair {
  int slot = -1;
  int value = -1;
  friend auto operator<=>(const SlotValuePair&, const SlotValuePair&) = default;
};

// Training-side vocabularies. All ids are dense in [0, size) and assigned in
// first-occurrence order of the input files.
struct Vocabulary {
  std::vector<std::string> words;
  std::vector<int64_t> word_counts;
  std::vector<std::string> slots;
  std::vector<std::string> values;
  std::vector<SlotValuePair> pairs;
  std::vector<int64_t> pair_counts;  // number of training items carrying it

  std::unordered_map<std::string, int> word_index;
  std::unordered_map<std::string, int> slot_index;
  std::unordered_map<std::string, int> value_index;  // keyed by lowercase
  std::unordered_map<int64_t, int> pair_index;       // slot * |values| + value

  int num_words() const { return static_cast<int>(words.size()); }
  int num_slots() const { return static_cast<int>(slots.size()); }
  int num_values() const { return static_cast<int>(values.size()); }
  int num_pairs() const { return static_cast<int>(pairs.size()); }

  int FindWord(std::string_view word) const;   // -1 when absent
  int FindSlot(std::string_view slot) const;   // -1 when absent
  // Case-insensitive exact match; -1 when absent.
  int FindValue(std::string_view value) const;
  int FindPair(int slot, int value) const;     // -1 when absent
};

// One raw annotation of an item whose slot is in the training vocabulary.
// `value` and `pair` are -1 when the training split never saw them.
struct Annotation {
  int slot = -1;
  int value = -1;
  int pair = -1;
  std::string value_text;
};

struct User {
  std::string user_id;
  std::vector<int> review_tokens;   // D_u
  std::vector<int> history_pairs;   // S_u, sorted pair ids
};

struct Item {
  std::string item_id;
  std::string title;
  std::vector<int> description_tokens;
  std::vector<int> review_tokens;
  std::vector<Annotation> annotations;  // known slots only, file order
  std::vector<int> pair_ids;            // S_v, sorted pair ids

  // Annotation for `slot`, or nullptr when the item does not carry it.
  const Annotation* FindAnnotation(int slot) const;
};

struct Query {
  std::string query_id;
  std::string text;
  std::vector<int> word_ids;  // in-vocabulary words only
};

struct Interaction {
  int user = -1;
  int query = -1;
  int item = -1;
  Split split = Split::kTrain;
};

// A (user, query) evaluation unit with its relevant test items.
struct TestPair {
  int user = -1;
  int query = -1;
  std::vector<int> relevant;
};

struct CorpusOptions {
  int min_count = 5;       // words rarer than this are dropped
  int min_pair_count = 2;  // pairs on fewer training items are unseen
};

class Corpus {
 public:
  Corpus() = default;

  static Corpus Build(CorpusRecords records, const CorpusOptions& options = {});

  const CorpusRecords& records() const { return records_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<User>& users() const { return users_; }
  const std::vector<Item>& items() const { return items_; }
  const std::vector<Query>& queries() const { return queries_; }
  const std::vector<Interaction>& interactions() const { return interactions_; }

  int num_users() const { return static_cast<int>(users_.size()); }
  int num_items() const { return static_cast<int>(items_.size()); }
  int num_queries() const { return static_cast<int>(queries_.size()); }

  int FindUser(std::string_view user_id) const;    // -1 when absent
  int FindItem(std::string_view item_id) const;    // -1 when absent
  int FindQuery(std::string_view query_id) const;  // -1 when absent

  // In-vocabulary word ids of arbitrary text; unknown words are dropped.
  std::vector<int> EncodeText(std::string_view text) const;

  // Test interactions grouped by (user, query) in first-occurrence order.
  // Users without a training interaction are skipped.
  std::vector<TestPair> TestPairs() const;

  // Items with at least one training interaction.
  const std::vector<bool>& trained_items() const { return trained_items_; }

 private:
  CorpusRecords records_;
  Vocabulary vocab_;
  std::vector<User> users_;
  std::vector<Item> items_;
  std::vector<Query> queries_;
  std::vector<Interaction> interactions_;
  std::vector<bool> trained_items_;
  std::unordered_map<std::string, int> user_index_;
  std::unordered_map<std::string, int> item_index_;
  std::unordered_map<std::string, int> query_index_;
};

Corpus IngestCorpus(const std::filesystem::path& dir,
                    const CorpusOptions& options = {});

// Word2vec-style keep probability min(1, sqrt(threshold / word_freq)).
double SubsampleKeepProbability(double word_freq, double threshold);

// Per user, the last ceil(fraction * k) interactions in insertion order become
// test. A user always keeps at least one training interaction.
struct SplitResult {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> test;
};
SplitResult SplitTrainTest(std::span<const InteractionRecord> interactions,
                           double fraction);
// Same rule, writing the split field in place.
void AssignSplits(std::span<InteractionRecord> interactions, double fraction);

}  // namespace convps

#endif  // CONVPS_CORPUS_H_
