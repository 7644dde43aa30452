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

#include "convps/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "convps/error.h"

namespace convps {
namespace {

using Rng = std::mt19937_64;

// Negative token codes -1 - x mention value x, or slot x - kSlotToken.
constexpr int kSlotToken = 1 << 24;

constexpr std::array<const char*, 24> kSyllables = {
    "ka", "lo", "mi", "ne", "ru", "ta", "vi", "so", "pe", "di", "fu", "ga",
    "ho", "ji", "ku", "le", "ma", "no", "pi", "ri", "sa", "te", "vo", "zu"};

constexpr std::array<const char*, 24> kSlotNames = {
    "price",   "quality", "size",     "color",    "brand",   "material",
    "weight",  "battery", "screen",   "fit",      "comfort", "style",
    "sound",   "design",  "shipping", "warranty", "capacity", "speed",
    "texture", "scent",   "flavor",   "grip",     "finish",  "foam"};

constexpr std::array<const char*, 32> kValueNames = {
    "outstanding", "cheap",  "big",     "small",    "real",    "thin",
    "thick",       "free",   "soft",    "bright",   "heavy",   "light",
    "sturdy",      "quiet",  "loud",    "classic",  "modern",  "warm",
    "cool",        "smooth", "rough",   "compact",  "slim",    "fast",
    "durable",     "fancy",  "plain",   "vivid",    "matte",   "glossy",
    "fresh",       "mild"};

// Draws from a fixed discrete distribution by inverting its CDF.
class Sampler {
 public:
  explicit Sampler(const std::vector<double>& weights) {
    cdf_.reserve(weights.size());
    double total = 0.0;
    for (double w : weights) cdf_.push_back(total += w);
    for (double& c : cdf_) c /= total;
  }
  int operator()(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int>(
        std::min<size_t>(it - cdf_.begin(), cdf_.size() - 1));
  }
  int size() const { return static_cast<int>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
};

std::vector<double> ZipfWeights(int n, double exponent) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 1.0 / std::pow(i + 1.0, exponent);
  return w;
}

bool Bernoulli(Rng& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

int UniformInt(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

std::vector<std::string> MakeWords(int n) {
  int length = 2;
  for (long long cap = 24 * 24; cap < n; cap *= 24) ++length;
  std::vector<std::string> words(n);
  for (int i = 0; i < n; ++i) {
    int x = i;
    std::string w;
    for (int k = 0; k < length; ++k) {
      w += kSyllables[x % 24];
      x /= 24;
    }
    words[i] = std::move(w);
  }
  return words;
}

std::string NumberedName(const char* base, int round) {
  return round == 0 ? std::string(base) : base + std::to_string(round + 1);
}

std::string JoinWords(const std::vector<std::string>& words,
                      const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += words[id];
  }
  return out;
}

struct Topic {
  std::vector<int> query_words;
  std::vector<int> extra_words;
  std::vector<int> slots;                  // candidate slots for its items
  std::vector<std::vector<int>> values;    // preferred values per slot
};

}  // namespace

void SyntheticConfig::Validate() const {
  if (num_users < 1 || num_items < 1 || num_queries < 1 || num_slots < 1 ||
      num_values < 1 || vocab_size < 1 || tokens_per_item < 1 ||
      tokens_per_user < 1 || pairs_per_item < 1 || interactions_per_user < 1) {
    throw InvalidArgument("synthetic corpus counts must all be >= 1");
  }
  if (pairs_per_item > num_slots) {
    throw InvalidArgument("pairs_per_item cannot exceed num_slots");
  }
  if (num_values < num_slots) {
    throw InvalidArgument("num_values must be at least num_slots");
  }
  if (vocab_size < 16) throw InvalidArgument("vocab_size must be >= 16");
  if (!(structure_strength >= 0.0 && structure_strength <= 1.0)) {
    throw InvalidArgument("structure_strength must lie in [0, 1]");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test_fraction must lie in (0, 1)");
  }
}

CorpusRecords GenerateSyntheticRecords(const SyntheticConfig& config) {
  config.Validate();
  Rng rng(config.seed);
  const double s = config.structure_strength;

  const std::vector<std::string> words = MakeWords(config.vocab_size);
  const Sampler background(ZipfWeights(config.vocab_size, 1.0));

  std::vector<std::string> slot_names(config.num_slots);
  for (int q = 0; q < config.num_slots; ++q) {
    slot_names[q] = NumberedName(kSlotNames[q % kSlotNames.size()],
                                 q / static_cast<int>(kSlotNames.size()));
  }
  // The last third of the slots form a long tail of rare aspects whose
  // values are item-specific, like noisy extractions; the rest are core
  // slots with shared values.
  const int num_tail = config.num_slots >= 3 ? config.num_slots / 3 : 0;
  const int num_core = config.num_slots - num_tail;
  const Sampler slot_popularity(ZipfWeights(num_core, 0.7));
  const Sampler tail_popularity(ZipfWeights(std::max(1, num_tail), 0.0));

  // Core values are partitioned over core slots; names are globally unique.
  std::vector<std::string> value_names(config.num_values);
  for (int a = 0; a < config.num_values; ++a) {
    value_names[a] = NumberedName(kValueNames[a % kValueNames.size()],
                                  a / static_cast<int>(kValueNames.size()));
  }
  std::vector<std::vector<int>> slot_values(config.num_slots);
  for (int a = 0; a < config.num_values; ++a) {
    slot_values[a % num_core].push_back(a);
  }
  auto tail_value = [&] {
    const int id = static_cast<int>(value_names.size());
    value_names.push_back(
        std::string(kValueNames[id % kValueNames.size()]) + "x" +
        std::to_string(id - config.num_values));
    return id;
  };
  std::vector<Sampler> value_popularity;
  for (const auto& vals : slot_values) {
    value_popularity.emplace_back(ZipfWeights(static_cast<int>(vals.size()), 1.0));
  }

  // Topics: query words come from the middle of the frequency range so they
  // survive min_count without dominating the background.
  const int mid_lo = config.vocab_size / 10;
  const int mid_hi = std::max(mid_lo + 1, config.vocab_size * 6 / 10);
  const int topic_slots =
      std::min(num_core, 2 * config.pairs_per_item);
  std::vector<Topic> topics(config.num_queries);
  for (auto& topic : topics) {
    auto pick_word = [&] { return mid_lo + UniformInt(rng, mid_hi - mid_lo); };
    while (topic.query_words.size() < 4) {
      const int w = pick_word();
      if (std::find(topic.query_words.begin(), topic.query_words.end(), w) ==
          topic.query_words.end()) {
        topic.query_words.push_back(w);
      }
    }
    for (int i = 0; i < 8; ++i) topic.extra_words.push_back(pick_word());
    while (static_cast<int>(topic.slots.size()) < topic_slots) {
      const int q = slot_popularity(rng);
      if (std::find(topic.slots.begin(), topic.slots.end(), q) !=
          topic.slots.end()) {
        continue;
      }
      topic.slots.push_back(q);
      std::vector<int> preferred;
      const auto& vals = slot_values[q];
      const int want = std::min<int>(3, static_cast<int>(vals.size()));
      while (static_cast<int>(preferred.size()) < want) {
        const int a = vals[UniformInt(rng, static_cast<int>(vals.size()))];
        if (std::find(preferred.begin(), preferred.end(), a) == preferred.end()) {
          preferred.push_back(a);
        }
      }
      topic.values.push_back(std::move(preferred));
    }
  }

  CorpusRecords records;
  const int id_width = static_cast<int>(std::to_string(
      std::max({config.num_users, config.num_items, config.num_queries})).size());
  auto make_id = [&](char prefix, int i) {
    std::string digits = std::to_string(i);
    return std::string(1, prefix) +
           std::string(id_width - std::min<int>(id_width, digits.size()), '0') +
           digits;
  };

  // Items.
  std::vector<int> item_topic(config.num_items);
  std::vector<std::vector<std::pair<int, int>>> item_pairs(config.num_items);
  std::vector<std::vector<int>> item_tokens(config.num_items);
  std::vector<std::vector<int>> topic_items(config.num_queries);
  for (int j = 0; j < config.num_items; ++j) {
    const int k = j % config.num_queries;
    item_topic[j] = k;
    topic_items[k].push_back(j);
    const Topic& topic = topics[k];

    std::vector<int> used;
    auto unused = [&](int q) {
      return std::find(used.begin(), used.end(), q) == used.end();
    };
    for (int p = 0; p < config.pairs_per_item; ++p) {
      int slot = -1;
      int value = -1;
      if (Bernoulli(rng, s)) {
        std::vector<int> open;
        for (size_t i = 0; i < topic.slots.size(); ++i) {
          if (unused(topic.slots[i])) open.push_back(static_cast<int>(i));
        }
        if (!open.empty()) {
          const int i = open[UniformInt(rng, static_cast<int>(open.size()))];
          slot = topic.slots[i];
          if (Bernoulli(rng, s)) {
            const auto& pref = topic.values[i];
            value = pref[UniformInt(rng, static_cast<int>(pref.size()))];
          }
        }
      }
      if (slot < 0 && num_tail > 0) {
        std::vector<int> open;
        for (int q = num_core; q < config.num_slots; ++q) {
          if (unused(q)) open.push_back(q);
        }
        if (!open.empty()) {
          do {
            slot = num_core + tail_popularity(rng);
          } while (!unused(slot));
          value = tail_value();
        }
      }
      while (slot < 0 || !unused(slot)) slot = slot_popularity(rng);
      if (value < 0) value = slot_values[slot][value_popularity[slot](rng)];
      used.push_back(slot);
      item_pairs[j].emplace_back(slot, value);
    }

    auto draw_token = [&] {
      if (Bernoulli(rng, s)) {
        if (Bernoulli(rng, 0.5)) {
          const int n = static_cast<int>(topic.query_words.size() +
                                         topic.extra_words.size());
          const int i = UniformInt(rng, n);
          return i < static_cast<int>(topic.query_words.size())
                     ? topic.query_words[i]
                     : topic.extra_words[i - topic.query_words.size()];
        }
        // Reviews mention the item's own aspects.
        const auto& [slot, value] =
            item_pairs[j][UniformInt(rng, config.pairs_per_item)];
        return -1 - (Bernoulli(rng, 0.5) ? value : kSlotToken + slot);
      }
      return background(rng);
    };
    ItemRecord rec;
    rec.item_id = make_id('B', j);
    std::vector<int> title_ids = {topic.query_words[UniformInt(rng, 4)],
                                  background(rng), background(rng)};
    rec.title = JoinWords(words, title_ids);
    auto render = [&](int n) {
      std::string text;
      for (int i = 0; i < n; ++i) {
        const int tok = draw_token();
        std::string word;
        if (tok >= 0) {
          word = words[tok];
          item_tokens[j].push_back(tok);
        } else {
          const int code = -1 - tok;
          word = code < kSlotToken ? value_names[code]
                                   : slot_names[code - kSlotToken];
        }
        if (!text.empty()) text += ' ';
        text += word;
      }
      return text;
    };
    const int desc_len = std::max(1, config.tokens_per_item / 2);
    const int review_len = std::max(1, config.tokens_per_item / 4);
    rec.description = render(desc_len);
    rec.reviews.push_back(render(review_len));
    rec.reviews.push_back(render(std::max(1, config.tokens_per_item -
                                                 desc_len - review_len)));
    for (const auto& [slot, value] : item_pairs[j]) {
      rec.pairs.emplace_back(slot_names[slot], value_names[value]);
    }
    records.items.push_back(std::move(rec));
  }

  // Users: one or two topics plus a taste for a few topic pairs.
  struct UserProfile {
    std::vector<int> topics;
    std::vector<std::pair<int, int>> taste;
  };
  std::vector<UserProfile> profiles(config.num_users);
  for (auto& profile : profiles) {
    profile.topics.push_back(UniformInt(rng, config.num_queries));
    if (config.num_queries > 1 && Bernoulli(rng, 0.4)) {
      int other = UniformInt(rng, config.num_queries - 1);
      if (other >= profile.topics[0]) ++other;
      profile.topics.push_back(other);
    }
    for (int k : profile.topics) {
      const Topic& topic = topics[k];
      for (int t = 0; t < 2 && !topic.slots.empty(); ++t) {
        const int i = UniformInt(rng, static_cast<int>(topic.slots.size()));
        const auto& pref = topic.values[i];
        profile.taste.emplace_back(
            topic.slots[i], pref[UniformInt(rng, static_cast<int>(pref.size()))]);
      }
    }
  }

  auto affinity = [&](const UserProfile& profile, int item) {
    int matches = 0;
    for (const auto& pair : item_pairs[item]) {
      matches += static_cast<int>(
          std::count(profile.taste.begin(), profile.taste.end(), pair));
    }
    return 1.0 + 3.0 * matches;
  };

  // Purchases. Training purchases are drawn for every user first so that test
  // targets can be restricted to items with training data.
  const int k_total = config.interactions_per_user;
  const int n_test = std::min(
      k_total - 1,
      static_cast<int>(std::ceil(config.test_fraction * k_total - 1e-9)));
  const int n_train = k_total - n_test;
  std::vector<std::vector<std::pair<int, int>>> purchases(config.num_users);
  std::vector<bool> warm(config.num_items, false);

  auto purchase = [&](int u, bool warm_only) -> std::pair<int, int> {
    const UserProfile& profile = profiles[u];
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int k =
          profile.topics[UniformInt(rng, static_cast<int>(profile.topics.size()))];
      int item = -1;
      if (Bernoulli(rng, s)) {
        std::vector<double> weights;
        for (int j : topic_items[k]) {
          weights.push_back(warm_only && !warm[j] ? 0.0 : affinity(profile, j));
        }
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) continue;
        item = topic_items[k][Sampler(weights)(rng)];
      } else {
        item = UniformInt(rng, config.num_items);
        if (warm_only && !warm[item]) continue;
      }
      const auto& mine = purchases[u];
      if (std::none_of(mine.begin(), mine.end(),
                       [&](const auto& p) { return p.second == item; })) {
        return {k, item};
      }
    }
    return {-1, -1};
  };
  for (int u = 0; u < config.num_users; ++u) {
    for (int i = 0; i < n_train; ++i) {
      auto p = purchase(u, false);
      if (p.second < 0) continue;
      purchases[u].push_back(p);
      warm[p.second] = true;
    }
  }
  for (int u = 0; u < config.num_users; ++u) {
    for (int i = 0; i < n_test; ++i) {
      auto p = purchase(u, true);
      if (p.second >= 0) purchases[u].push_back(p);
    }
  }

  std::vector<InteractionRecord> interactions;
  for (int u = 0; u < config.num_users; ++u) {
    for (const auto& [k, item] : purchases[u]) {
      interactions.push_back(
          {make_id('U', u), make_id('Q', k), make_id('B', item), Split::kTrain});
    }
  }
  AssignSplits(interactions, config.test_fraction);
  records.interactions = std::move(interactions);

  for (int u = 0; u < config.num_users; ++u) {
    std::vector<int> bought;
    for (size_t i = 0; i < purchases[u].size(); ++i) {
      if (static_cast<int>(i) < n_train) bought.push_back(purchases[u][i].second);
    }
    std::vector<int> ids;
    for (int t = 0; t < config.tokens_per_user; ++t) {
      if (!bought.empty() && Bernoulli(rng, s)) {
        const auto& pool =
            item_tokens[bought[UniformInt(rng, static_cast<int>(bought.size()))]];
        if (!pool.empty()) {
          ids.push_back(pool[UniformInt(rng, static_cast<int>(pool.size()))]);
          continue;
        }
      }
      ids.push_back(background(rng));
    }
    records.users.push_back({make_id('U', u), JoinWords(words, ids)});
  }

  for (int k = 0; k < config.num_queries; ++k) {
    records.queries.push_back(
        {make_id('Q', k), JoinWords(words, topics[k].query_words)});
  }
  return records;
}

}  // namespace convps
