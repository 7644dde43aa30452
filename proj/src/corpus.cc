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

#include "convps/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "convps/error.h"
#include "convps/text.h"
#include "json.hpp"

namespace convps {
namespace {

using Json = nlohmann::ordered_json;

int64_t PairKey(int slot, int value) {
  return (static_cast<int64_t>(slot) << 32) | static_cast<uint32_t>(value);
}

std::string Where(std::string_view file, size_t line) {
  std::ostringstream os;
  os << file << ":" << line;
  return os.str();
}

const Json& Field(const Json& obj, const char* key, std::string_view file,
                  size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw InvalidArgument(Where(file, line) + ": missing field \"" + key +
                          "\"");
  }
  return *it;
}

std::string StringField(const Json& obj, const char* key, std::string_view file,
                        size_t line) {
  const Json& v = Field(obj, key, file, line);
  if (!v.is_string()) {
    throw InvalidArgument(Where(file, line) + ": field \"" + key +
                          "\" must be a string");
  }
  return v.get<std::string>();
}

// Calls `fn(json, line_number)` for each non-blank line of `file`.
template <typename Fn>
void ForEachRecord(const std::filesystem::path& dir, std::string_view file,
                   Fn&& fn) {
  const auto path = dir / std::string(file);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("missing corpus file: " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw InvalidArgument(Where(file, line_no) + ": malformed line: " +
                            e.what());
    }
    if (!record.is_object()) {
      throw InvalidArgument(Where(file, line_no) + ": expected an object");
    }
    fn(record, line_no);
  }
}

template <typename Index>
void CheckUnique(Index& index, const std::string& id, int position,
                 std::string_view file, size_t line) {
  if (id.empty()) throw InvalidArgument(Where(file, line) + ": empty id");
  if (!index.emplace(id, position).second) {
    throw InvalidArgument(Where(file, line) + ": duplicate id \"" + id + "\"");
  }
}

}  // namespace

std::string_view SplitName(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

CorpusRecords ReadCorpusRecords(const std::filesystem::path& dir) {
  CorpusRecords records;
  std::unordered_map<std::string, int> users, items, queries;

  ForEachRecord(dir, kUsersFile, [&](const Json& j, size_t line) {
    UserRecord r;
    r.user_id = StringField(j, "user_id", kUsersFile, line);
    r.review_text = StringField(j, "review_text", kUsersFile, line);
    CheckUnique(users, r.user_id, static_cast<int>(records.users.size()),
                kUsersFile, line);
    records.users.push_back(std::move(r));
  });

  ForEachRecord(dir, kItemsFile, [&](const Json& j, size_t line) {
    ItemRecord r;
    r.item_id = StringField(j, "item_id", kItemsFile, line);
    r.title = StringField(j, "title", kItemsFile, line);
    r.description = StringField(j, "description", kItemsFile, line);
    const Json& reviews = Field(j, "reviews", kItemsFile, line);
    if (!reviews.is_array()) {
      throw InvalidArgument(Where(kItemsFile, line) +
                            ": field \"reviews\" must be an array");
    }
    for (const Json& review : reviews) {
      if (!review.is_string()) {
        throw InvalidArgument(Where(kItemsFile, line) +
                              ": reviews must be strings");
      }
      r.reviews.push_back(review.get<std::string>());
    }
    const Json& pairs = Field(j, "pairs", kItemsFile, line);
    if (!pairs.is_array()) {
      throw InvalidArgument(Where(kItemsFile, line) +
                            ": field \"pairs\" must be an array");
    }
    for (const Json& pair : pairs) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
          !pair[1].is_string()) {
        throw InvalidArgument(Where(kItemsFile, line) +
                              ": each pair must be [\"slot\", \"value\"]");
      }
      auto slot = pair[0].get<std::string>();
      auto value = pair[1].get<std::string>();
      if (Tokenize(slot).empty()) {
        throw InvalidArgument(Where(kItemsFile, line) +
                              ": pair references an undeclared slot \"" +
                              slot + "\"");
      }
      if (Tokenize(value).empty()) {
        throw InvalidArgument(Where(kItemsFile, line) +
                              ": pair for slot \"" + slot +
                              "\" has an empty value");
      }
      r.pairs.emplace_back(std::move(slot), std::move(value));
    }
    CheckUnique(items, r.item_id, static_cast<int>(records.items.size()),
                kItemsFile, line);
    records.items.push_back(std::move(r));
  });

  ForEachRecord(dir, kQueriesFile, [&](const Json& j, size_t line) {
    QueryRecord r;
    r.query_id = StringField(j, "query_id", kQueriesFile, line);
    r.query_text = StringField(j, "query_text", kQueriesFile, line);
    CheckUnique(queries, r.query_id, static_cast<int>(records.queries.size()),
                kQueriesFile, line);
    records.queries.push_back(std::move(r));
  });

  ForEachRecord(dir, kInteractionsFile, [&](const Json& j, size_t line) {
    InteractionRecord r;
    r.user_id = StringField(j, "user_id", kInteractionsFile, line);
    r.query_id = StringField(j, "query_id", kInteractionsFile, line);
    r.item_id = StringField(j, "item_id", kInteractionsFile, line);
    const std::string split = StringField(j, "split", kInteractionsFile, line);
    if (split == "train") {
      r.split = Split::kTrain;
    } else if (split == "test") {
      r.split = Split::kTest;
    } else {
      throw InvalidArgument(Where(kInteractionsFile, line) +
                            ": split must be \"train\" or \"test\"");
    }
    if (!users.contains(r.user_id)) {
      throw InvalidArgument(Where(kInteractionsFile, line) +
                            ": unknown user_id \"" + r.user_id + "\"");
    }
    if (!queries.contains(r.query_id)) {
      throw InvalidArgument(Where(kInteractionsFile, line) +
                            ": unknown query_id \"" + r.query_id + "\"");
    }
    if (!items.contains(r.item_id)) {
      throw InvalidArgument(Where(kInteractionsFile, line) +
                            ": unknown item_id \"" + r.item_id + "\"");
    }
    records.interactions.push_back(std::move(r));
  });
  return records;
}

std::vector<std::pair<std::string, std::string>> SerializeCorpusRecords(
    const CorpusRecords& records) {
  std::string users, items, queries, interactions;
  for (const auto& u : records.users) {
    Json j;
    j["user_id"] = u.user_id;
    j["review_text"] = u.review_text;
    users += j.dump() + "\n";
  }
  for (const auto& v : records.items) {
    Json j;
    j["item_id"] = v.item_id;
    j["title"] = v.title;
    j["description"] = v.description;
    j["reviews"] = v.reviews;
    Json pairs = Json::array();
    for (const auto& [slot, value] : v.pairs) pairs.push_back({slot, value});
    j["pairs"] = std::move(pairs);
    items += j.dump() + "\n";
  }
  for (const auto& q : records.queries) {
    Json j;
    j["query_id"] = q.query_id;
    j["query_text"] = q.query_text;
    queries += j.dump() + "\n";
  }
  for (const auto& x : records.interactions) {
    Json j;
    j["user_id"] = x.user_id;
    j["query_id"] = x.query_id;
    j["item_id"] = x.item_id;
    j["split"] = std::string(SplitName(x.split));
    interactions += j.dump() + "\n";
  }
  return {{std::string(kUsersFile), std::move(users)},
          {std::string(kItemsFile), std::move(items)},
          {std::string(kQueriesFile), std::move(queries)},
          {std::string(kInteractionsFile), std::move(interactions)}};
}

void WriteCorpusRecords(const CorpusRecords& records,
                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (const auto& [name, bytes] : SerializeCorpusRecords(records)) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
  }
}

int Vocabulary::FindWord(std::string_view word) const {
  auto it = word_index.find(std::string(word));
  return it == word_index.end() ? -1 : it->second;
}

int Vocabulary::FindSlot(std::string_view slot) const {
  auto it = slot_index.find(std::string(slot));
  return it == slot_index.end() ? -1 : it->second;
}

int Vocabulary::FindValue(std::string_view value) const {
  auto it = value_index.find(ToLower(value));
  return it == value_index.end() ? -1 : it->second;
}

int Vocabulary::FindPair(int slot, int value) const {
  if (slot < 0 || value < 0) return -1;
  auto it = pair_index.find(PairKey(slot, value));
  return it == pair_index.end() ? -1 : it->second;
}

const Annotation* Item::FindAnnotation(int slot) const {
  for (const auto& a : annotations) {
    if (a.slot == slot) return &a;
  }
  return nullptr;
}

Corpus Corpus::Build(CorpusRecords records, const CorpusOptions& options) {
  if (options.min_count < 1 || options.min_pair_count < 1) {
    throw InvalidArgument("min_count and min_pair_count must be >= 1");
  }
  Corpus c;
  c.records_ = std::move(records);
  const CorpusRecords& r = c.records_;

  for (size_t i = 0; i < r.users.size(); ++i) {
    c.user_index_.emplace(r.users[i].user_id, static_cast<int>(i));
  }
  for (size_t i = 0; i < r.items.size(); ++i) {
    c.item_index_.emplace(r.items[i].item_id, static_cast<int>(i));
  }
  for (size_t i = 0; i < r.queries.size(); ++i) {
    c.query_index_.emplace(r.queries[i].query_id, static_cast<int>(i));
  }
  c.trained_items_.assign(r.items.size(), false);
  for (const auto& x : r.interactions) {
    Interaction in;
    in.user = c.FindUser(x.user_id);
    in.query = c.FindQuery(x.query_id);
    in.item = c.FindItem(x.item_id);
    in.split = x.split;
    if (in.user < 0 || in.query < 0 || in.item < 0) {
      throw InvalidArgument("interaction references an unknown id: " +
                            x.user_id + "/" + x.query_id + "/" + x.item_id);
    }
    if (in.split == Split::kTrain) c.trained_items_[in.item] = true;
    c.interactions_.push_back(in);
  }

  // Words, counted over every text field in file order.
  Vocabulary& vocab = c.vocab_;
  std::vector<std::string> order;
  std::unordered_map<std::string, int64_t> counts;
  auto count_text = [&](std::string_view text) {
    for (auto& tok : Tokenize(text)) {
      auto [it, inserted] = counts.emplace(tok, 0);
      if (inserted) order.push_back(tok);
      ++it->second;
    }
  };
  for (const auto& u : r.users) count_text(u.review_text);
  for (const auto& v : r.items) {
    count_text(v.title);
    count_text(v.description);
    for (const auto& review : v.reviews) count_text(review);
  }
  for (const auto& q : r.queries) count_text(q.query_text);
  for (const auto& w : order) {
    const int64_t n = counts[w];
    if (n < options.min_count) continue;
    vocab.word_index.emplace(w, vocab.num_words());
    vocab.words.push_back(w);
    vocab.word_counts.push_back(n);
  }

  // Slots and pairs, from items with a training interaction only.
  struct PairStat {
    std::string slot;
    std::string value;  // first-seen spelling
    int64_t count = 0;
  };
  std::vector<PairStat> pair_stats;
  std::map<std::pair<std::string, std::string>, size_t> pair_lookup;
  for (size_t i = 0; i < r.items.size(); ++i) {
    if (!c.trained_items_[i]) continue;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [slot, value] : r.items[i].pairs) {
      if (!vocab.slot_index.contains(slot)) {
        vocab.slot_index.emplace(slot, vocab.num_slots());
        vocab.slots.push_back(slot);
      }
      auto key = std::make_pair(slot, ToLower(value));
      if (!seen.insert(key).second) continue;
      auto [it, inserted] = pair_lookup.emplace(key, pair_stats.size());
      if (inserted) pair_stats.push_back({slot, value, 0});
      ++pair_stats[it->second].count;
    }
  }
  for (const auto& stat : pair_stats) {
    if (stat.count < options.min_pair_count) continue;
    const std::string key = ToLower(stat.value);
    auto [vit, inserted] = vocab.value_index.emplace(key, vocab.num_values());
    if (inserted) vocab.values.push_back(stat.value);
    const SlotValuePair p{vocab.slot_index.at(stat.slot), vit->second};
    vocab.pair_index.emplace(PairKey(p.slot, p.value), vocab.num_pairs());
    vocab.pairs.push_back(p);
    vocab.pair_counts.push_back(stat.count);
  }

  auto encode = [&](std::string_view text, std::vector<int>& out) {
    for (const auto& tok : Tokenize(text)) {
      const int id = vocab.FindWord(tok);
      if (id >= 0) out.push_back(id);
    }
  };

  c.items_.reserve(r.items.size());
  for (const auto& rec : r.items) {
    Item item;
    item.item_id = rec.item_id;
    item.title = rec.title;
    encode(rec.title, item.description_tokens);
    encode(rec.description, item.description_tokens);
    for (const auto& review : rec.reviews) encode(review, item.review_tokens);
    for (const auto& [slot, value] : rec.pairs) {
      Annotation a;
      a.slot = vocab.FindSlot(slot);
      if (a.slot < 0) continue;
      a.value = vocab.FindValue(value);
      a.pair = vocab.FindPair(a.slot, a.value);
      a.value_text = value;
      if (a.pair >= 0) item.pair_ids.push_back(a.pair);
      item.annotations.push_back(std::move(a));
    }
    std::sort(item.pair_ids.begin(), item.pair_ids.end());
    item.pair_ids.erase(std::unique(item.pair_ids.begin(), item.pair_ids.end()),
                        item.pair_ids.end());
    c.items_.push_back(std::move(item));
  }

  c.users_.reserve(r.users.size());
  for (const auto& rec : r.users) {
    User user;
    user.user_id = rec.user_id;
    encode(rec.review_text, user.review_tokens);
    c.users_.push_back(std::move(user));
  }
  for (const auto& in : c.interactions_) {
    if (in.split != Split::kTrain) continue;
    auto& history = c.users_[in.user].history_pairs;
    const auto& pairs = c.items_[in.item].pair_ids;
    history.insert(history.end(), pairs.begin(), pairs.end());
  }
  for (auto& user : c.users_) {
    std::sort(user.history_pairs.begin(), user.history_pairs.end());
    user.history_pairs.erase(
        std::unique(user.history_pairs.begin(), user.history_pairs.end()),
        user.history_pairs.end());
  }

  c.queries_.reserve(r.queries.size());
  for (const auto& rec : r.queries) {
    Query q;
    q.query_id = rec.query_id;
    q.text = rec.query_text;
    encode(rec.query_text, q.word_ids);
    c.queries_.push_back(std::move(q));
  }
  return c;
}

int Corpus::FindUser(std::string_view user_id) const {
  auto it = user_index_.find(std::string(user_id));
  return it == user_index_.end() ? -1 : it->second;
}

int Corpus::FindItem(std::string_view item_id) const {
  auto it = item_index_.find(std::string(item_id));
  return it == item_index_.end() ? -1 : it->second;
}

int Corpus::FindQuery(std::string_view query_id) const {
  auto it = query_index_.find(std::string(query_id));
  return it == query_index_.end() ? -1 : it->second;
}

std::vector<int> Corpus::EncodeText(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : Tokenize(text)) {
    const int id = vocab_.FindWord(tok);
    if (id >= 0) ids.push_back(id);
  }
  return ids;
}

std::vector<TestPair> Corpus::TestPairs() const {
  std::vector<bool> has_train(users_.size(), false);
  for (const auto& in : interactions_) {
    if (in.split == Split::kTrain) has_train[in.user] = true;
  }
  std::vector<TestPair> pairs;
  std::map<std::pair<int, int>, size_t> index;
  for (const auto& in : interactions_) {
    if (in.split != Split::kTest || !has_train[in.user]) continue;
    auto [it, inserted] =
        index.emplace(std::make_pair(in.user, in.query), pairs.size());
    if (inserted) pairs.push_back({in.user, in.query, {}});
    auto& relevant = pairs[it->second].relevant;
    if (std::find(relevant.begin(), relevant.end(), in.item) == relevant.end()) {
      relevant.push_back(in.item);
    }
  }
  return pairs;
}

Corpus IngestCorpus(const std::filesystem::path& dir,
                    const CorpusOptions& options) {
  return Corpus::Build(ReadCorpusRecords(dir), options);
}

double SubsampleKeepProbability(double word_freq, double threshold) {
  if (!(word_freq > 0.0) || !(threshold > 0.0)) {
    throw InvalidArgument("subsampling needs positive frequency and threshold");
  }
  return std::min(1.0, std::sqrt(threshold / word_freq));
}

void AssignSplits(std::span<InteractionRecord> interactions, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("split fraction must lie in (0, 1)");
  }
  std::unordered_map<std::string, size_t> per_user;
  for (const auto& x : interactions) ++per_user[x.user_id];
  std::unordered_map<std::string, size_t> seen;
  for (auto& x : interactions) {
    const size_t k = per_user[x.user_id];
    size_t n_test =
        static_cast<size_t>(std::ceil(fraction * static_cast<double>(k) - 1e-9));
    n_test = std::min(n_test, k - 1);
    const size_t position = seen[x.user_id]++;
    x.split = position >= k - n_test ? Split::kTest : Split::kTrain;
  }
}

SplitResult SplitTrainTest(std::span<const InteractionRecord> interactions,
                           double fraction) {
  std::vector<InteractionRecord> all(interactions.begin(), interactions.end());
  AssignSplits(all, fraction);
  SplitResult out;
  for (auto& x : all) {
    (x.split == Split::kTest ? out.test : out.train).push_back(std::move(x));
  }
  return out;
}

}  // namespace convps
