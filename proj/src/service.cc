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

#include "convps/service.h"

#include <algorithm>
#include <cstdio>

#include "convps/error.h"
#include "httplib.h"

namespace convps {

using nlohmann::ordered_json;

void ServiceConfig::Validate() const {
  if (port < 0 || port > 65535) throw InvalidArgument("port out of range");
  if (top_k < 1) throw InvalidArgument("top_k must be >= 1");
  if (!(session_ttl_s > 0)) throw InvalidArgument("session TTL must be > 0");
  lambdas.Validate();
  strategy_config.Validate();
}

void ParseListenAddress(const std::string& addr, ServiceConfig& config) {
  const size_t colon = addr.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("address needs ':port'");
  const std::string port = addr.substr(colon + 1);
  if (port.empty() ||
      !std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw InvalidArgument("bad port in address '" + addr + "'");
  }
  const int p = std::stoi(port);
  if (p > 65535) throw InvalidArgument("port out of range");
  config.port = p;
  config.host = colon == 0 ? "0.0.0.0" : addr.substr(0, colon);
}

namespace {

ApiResponse Error(int status, const std::string& message) {
  ordered_json body;
  body["error"] = message;
  return {status, std::move(body)};
}

template <typename Fn>
ApiResponse Guard(Fn&& fn) {
  try {
    return fn();
  } catch (const NotFound& e) {
    return Error(404, e.what());
  } catch (const InvalidArgument& e) {
    return Error(400, e.what());
  } catch (const FailedPrecondition& e) {
    return Error(409, e.what());
  } catch (const nlohmann::json::exception& e) {
    return Error(400, std::string("malformed body: ") + e.what());
  } catch (const std::exception& e) {
    return Error(500, e.what());
  }
}

ordered_json ParseObject(const std::string& body) {
  ordered_json j = ordered_json::parse(body);
  if (!j.is_object()) throw InvalidArgument("body must be a JSON object");
  return j;
}

}  // namespace

ConvService::ConvService(const Corpus& corpus, const ModelParams& params,
                         const QuestionPool& pool, ServiceConfig config,
                         Clock clock)
    : corpus_(corpus), params_(params), pool_(pool),
      config_(std::move(config)), clock_(std::move(clock)),
      id_rng_(std::random_device{}()) {
  config_.Validate();
  const Vocabulary& vocab = corpus_.vocab();
  std::vector<std::vector<int>> by_slot(vocab.num_slots());
  for (int p = 0; p < vocab.num_pairs(); ++p) by_slot[vocab.pairs[p].slot].push_back(p);
  slots_json_ = ordered_json::array();
  for (int q = 0; q < vocab.num_slots(); ++q) {
    auto& ps = by_slot[q];
    std::stable_sort(ps.begin(), ps.end(), [&](int a, int b) {
      return vocab.pair_counts[a] > vocab.pair_counts[b];
    });
    ordered_json examples = ordered_json::array();
    for (size_t i = 0; i < ps.size() && i < 8; ++i) {
      examples.push_back(vocab.values[vocab.pairs[ps[i]].value]);
    }
    ordered_json s;
    s["slot"] = vocab.slots[q];
    s["prompt"] = QuestionPrompt(vocab.slots[q]);
    s["examples"] = std::move(examples);
    slots_json_.push_back(std::move(s));
  }
}

SearchContext ConvService::Context() const {
  return SearchContext{corpus_, params_, pool_, config_.lambdas,
                       config_.strategy_config};
}

std::string ConvService::NewSessionId() {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%08llx",
                static_cast<unsigned long long>(id_rng_()),
                static_cast<unsigned long long>(++session_counter_ & 0xffffffffULL));
  return buf;
}

void ConvService::PurgeExpired(std::chrono::steady_clock::time_point now) {
  const auto ttl = std::chrono::duration<double>(config_.session_ttl_s);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_active > ttl) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<ConvService::Resource> ConvService::Lookup(
    const std::string& session_id) {
  std::lock_guard<std::mutex> lock(mu_);
  PurgeExpired(clock_());
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw NotFound("unknown or expired session '" + session_id + "'");
  }
  return it->second;
}

size_t ConvService::num_sessions() {
  std::lock_guard<std::mutex> lock(mu_);
  PurgeExpired(clock_());
  return sessions_.size();
}

ordered_json ConvService::RankingJson(const Session& session) const {
  ordered_json out = ordered_json::array();
  const size_t n = std::min<size_t>(session.ranking.size(), config_.top_k);
  for (size_t i = 0; i < n; ++i) {
    const ScoredItem& s = session.ranking[i];
    ordered_json e;
    e["item_id"] = corpus_.items()[s.item].item_id;
    e["title"] = corpus_.items()[s.item].title;
    e["score"] = s.score;
    out.push_back(std::move(e));
  }
  return out;
}

ordered_json ConvService::QuestionJson(const Session& session) const {
  if (session.pending_slot < 0) return nullptr;
  ordered_json q;
  q["slot"] = pool_.slot_name(session.pending_slot);
  q["prompt"] = QuestionPrompt(pool_.slot_name(session.pending_slot));
  return q;
}

void ConvService::AddTargetRank(const Resource& r, ordered_json& body) const {
  if (config_.demo_mode && r.target >= 0) {
    body["target_rank"] = r.session.RankOf(r.target);
  }
}

ApiResponse ConvService::CreateSession(const std::string& body) {
  return Guard([&]() -> ApiResponse {
    const ordered_json req = ParseObject(body);
    std::string user_id = kAnonymousUser;
    if (req.contains("user_id") && !req["user_id"].is_null()) {
      if (!req["user_id"].is_string()) throw InvalidArgument("user_id must be a string");
      user_id = req["user_id"].get<std::string>();
    }
    if (!req.contains("query_text") || !req["query_text"].is_string()) {
      throw InvalidArgument("query_text must be a string");
    }
    const std::string query_text = req["query_text"].get<std::string>();
    int user = kNoUser;
    if (user_id != kAnonymousUser) {
      user = corpus_.FindUser(user_id);
      if (user < 0) throw NotFound("unknown user '" + user_id + "'");
    }
    int target = -1;
    if (req.contains("target_item_id") && !req["target_item_id"].is_null()) {
      if (!req["target_item_id"].is_string()) {
        throw InvalidArgument("target_item_id must be a string");
      }
      const std::string id = req["target_item_id"].get<std::string>();
      target = corpus_.FindItem(id);
      if (target < 0) throw NotFound("unknown item '" + id + "'");
    }
    std::vector<int> words = corpus_.EncodeText(query_text);
    if (words.empty()) throw InvalidArgument("query has no known words");

    auto r = std::make_shared<Resource>();
    std::string id;
    uint64_t seed;
    {
      std::lock_guard<std::mutex> lock(mu_);
      id = NewSessionId();
      seed = config_.strategy_config.seed + session_counter_;
    }
    const SearchContext ctx = Context();
    r->session = StartSession(ctx, user, std::move(words), config_.strategy, seed);
    if (!PoolExhausted(r->session)) AskNext(ctx, r->session);
    r->user_id = user_id;
    r->query_text = query_text;
    r->target = target;
    r->created = r->last_active = clock_();

    ordered_json out;
    out["session_id"] = id;
    out["question"] = QuestionJson(r->session);
    out["ranking"] = RankingJson(r->session);
    AddTargetRank(*r, out);
    out["round"] = 0;
    out["done"] = r->session.pending_slot < 0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      PurgeExpired(r->created);
      sessions_.emplace(id, std::move(r));
    }
    return {201, std::move(out)};
  });
}

ApiResponse ConvService::Answer(const std::string& session_id,
                                const std::string& body) {
  return Guard([&]() -> ApiResponse {
    std::shared_ptr<Resource> r = Lookup(session_id);
    std::lock_guard<std::mutex> lock(r->mu);
    const ordered_json req = ParseObject(body);
    const bool has_value = req.contains("value");
    const bool not_relevant = req.contains("not_relevant");
    const bool not_sure = req.contains("not_sure");
    if (has_value + not_relevant + not_sure != 1) {
      throw InvalidArgument("give exactly one of value, not_relevant, not_sure");
    }
    if (has_value && !req["value"].is_string()) {
      throw InvalidArgument("value must be a string");
    }
    if ((not_relevant && req["not_relevant"] != true) ||
        (not_sure && req["not_sure"] != true)) {
      throw InvalidArgument("not_relevant / not_sure must be true");
    }
    Session& s = r->session;
    if (s.pending_slot < 0) throw FailedPrecondition("no question is pending");
    if (req.contains("round")) {
      if (!req["round"].is_number_integer()) throw InvalidArgument("round must be an integer");
      if (req["round"].get<int>() != s.rounds()) {
        throw FailedPrecondition("round " + req["round"].dump() + " already answered");
      }
    }
    const int slot = s.pending_slot;
    if (req.contains("slot")) {
      if (!req["slot"].is_string()) throw InvalidArgument("slot must be a string");
      if (req["slot"].get<std::string>() != pool_.slot_name(slot)) {
        throw InvalidArgument("answer names slot '" + req["slot"].get<std::string>() +
                              "' but '" + pool_.slot_name(slot) + "' was asked");
      }
    }

    Feedback fb = Feedback::Invalid();
    const char* reason = nullptr;
    if (not_relevant) {
      fb = Feedback::Negative();
    } else if (not_sure) {
      reason = "not_sure";
    } else {
      const std::string text = req["value"].get<std::string>();
      const int value = corpus_.vocab().FindValue(text);
      if (value < 0) {
        reason = "unknown_value";
      } else if (corpus_.vocab().FindPair(slot, value) < 0) {
        throw InvalidArgument("value '" + text + "' does not belong to slot '" +
                              pool_.slot_name(slot) + "'");
      } else {
        fb = Feedback::Positive(value);
      }
    }
    const SearchContext ctx = Context();
    ApplyFeedback(ctx, s, slot, fb);
    if (!PoolExhausted(s)) AskNext(ctx, s);
    r->last_active = clock_();

    ordered_json out;
    out["accepted"] = reason == nullptr;
    if (reason != nullptr) out["reason"] = reason;
    out["question"] = QuestionJson(s);
    out["ranking"] = RankingJson(s);
    AddTargetRank(*r, out);
    out["round"] = s.rounds();
    out["done"] = s.pending_slot < 0;
    return {200, std::move(out)};
  });
}

ApiResponse ConvService::GetSession(const std::string& session_id) {
  return Guard([&]() -> ApiResponse {
    std::shared_ptr<Resource> r = Lookup(session_id);
    std::lock_guard<std::mutex> lock(r->mu);
    const Session& s = r->session;
    ordered_json transcript = ordered_json::array();
    for (size_t i = 0; i < s.transcript.size(); ++i) {
      const Turn& t = s.transcript[i];
      ordered_json e;
      e["round"] = i + 1;
      e["slot"] = pool_.slot_name(t.slot);
      e["feedback"] = FeedbackKindName(t.feedback.kind);
      if (t.feedback.kind == FeedbackKind::kPositive) {
        e["value"] = corpus_.vocab().values[t.feedback.value];
      }
      transcript.push_back(std::move(e));
    }
    ordered_json out;
    out["session_id"] = session_id;
    out["user_id"] = r->user_id;
    out["query_text"] = r->query_text;
    out["round"] = s.rounds();
    out["transcript"] = std::move(transcript);
    out["question"] = QuestionJson(s);
    out["ranking"] = RankingJson(s);
    AddTargetRank(*r, out);
    out["done"] = s.pending_slot < 0;
    return {200, std::move(out)};
  });
}

ApiResponse ConvService::MetaSlots() const {
  ordered_json out;
  out["slots"] = slots_json_;
  return {200, std::move(out)};
}

ApiResponse ConvService::GetItem(const std::string& item_id) const {
  return Guard([&]() -> ApiResponse {
    const int v = corpus_.FindItem(item_id);
    if (v < 0) throw NotFound("unknown item '" + item_id + "'");
    const ItemRecord& rec = corpus_.records().items[v];
    ordered_json pairs = ordered_json::array();
    for (const auto& [slot, value] : rec.pairs) {
      pairs.push_back({{"slot", slot}, {"value", value}});
    }
    ordered_json out;
    out["item_id"] = rec.item_id;
    out["title"] = rec.title;
    out["description"] = rec.description;
    out["pairs"] = std::move(pairs);
    return {200, std::move(out)};
  });
}

void ConvService::Register(httplib::Server& server) {
  auto send = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  };
  server.Post("/sessions", [this, send](const httplib::Request& req,
                                        httplib::Response& res) {
    send(res, CreateSession(req.body));
  });
  server.Post(R"(/sessions/([^/]+)/answer)",
              [this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, Answer(req.matches[1], req.body));
              });
  server.Get(R"(/sessions/([^/]+))",
             [this, send](const httplib::Request& req, httplib::Response& res) {
               send(res, GetSession(req.matches[1]));
             });
  server.Get("/meta/slots", [this, send](const httplib::Request&,
                                         httplib::Response& res) {
    send(res, MetaSlots());
  });
  server.Get(R"(/items/([^/]+))",
             [this, send](const httplib::Request& req, httplib::Response& res) {
               send(res, GetItem(req.matches[1]));
             });
}

}  // namespace convps
