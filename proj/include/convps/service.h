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

#ifndef CONVPS_SERVICE_H_
#define CONVPS_SERVICE_H_

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include "convps/ask.h"
#include "convps/corpus.h"
#include "convps/dialogue.h"
#include "convps/model.h"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace convps {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string model_path;
  std::string corpus_path;
  StrategyKind strategy = StrategyKind::kLinRel;
  LambdaWeights lambdas;
  StrategyConfig strategy_config;
  int top_k = 10;
  double session_ttl_s = 1800.0;
  bool demo_mode = false;

  void Validate() const;
};

// "host:port" or ":port". Throws InvalidArgument.
void ParseListenAddress(const std::string& addr, ServiceConfig& config);

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

inline constexpr const char* kAnonymousUser = "anonymous";

// Live conversational sessions over a loaded model. Handlers are callable
// directly or through Register().
class ConvService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  ConvService(const Corpus& corpus, const ModelParams& params,
              const QuestionPool& pool, ServiceConfig config,
              Clock clock = std::chrono::steady_clock::now);

  ApiResponse CreateSession(const std::string& body);
  ApiResponse Answer(const std::string& session_id, const std::string& body);
  ApiResponse GetSession(const std::string& session_id);
  ApiResponse MetaSlots() const;
  ApiResponse GetItem(const std::string& item_id) const;

  void Register(httplib::Server& server);
  size_t num_sessions();
  const ServiceConfig& config() const { return config_; }

 private:
  struct Resource {
    std::mutex mu;
    Session session;
    std::string user_id;
    std::string query_text;
    int target = -1;
    std::chrono::steady_clock::time_point created;
    std::chrono::steady_clock::time_point last_active;
  };

  SearchContext Context() const;
  std::shared_ptr<Resource> Lookup(const std::string& session_id);
  void PurgeExpired(std::chrono::steady_clock::time_point now);
  nlohmann::ordered_json RankingJson(const Session& session) const;
  nlohmann::ordered_json QuestionJson(const Session& session) const;
  void AddTargetRank(const Resource& r, nlohmann::ordered_json& body) const;
  std::string NewSessionId();

  const Corpus& corpus_;
  const ModelParams& params_;
  const QuestionPool& pool_;
  ServiceConfig config_;
  Clock clock_;
  nlohmann::ordered_json slots_json_;

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Resource>> sessions_;
  std::mt19937_64 id_rng_;
  uint64_t session_counter_ = 0;
};

}  // namespace convps

#endif  // CONVPS_SERVICE_H_
