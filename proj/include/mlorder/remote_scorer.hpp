#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlorder/scorer.hpp"

namespace httplib {
class Client;
}

namespace mlorder {

struct RemoteOptions {
  std::string endpoint;  // http://host:port[/prefix]
  std::size_t batch_size = 32;
  std::size_t max_concurrent_requests = 4;
  std::chrono::milliseconds timeout{30000};
  std::size_t retries = 2;
};

struct HealthStatus {
  bool ok = false;
  int http_status = 0;
  std::string masked_model;
  std::string causal_model;
};

// Wire encoding. Exposed for protocol conformance tests.
namespace wire {

nlohmann::json encode_masked(const MaskedScoreRequest& req);
nlohmann::json encode_causal(const CausalScoreRequest& req);

/// Every requested target must appear exactly once with a numeric value <= 0.
PositionScores decode_masked(const nlohmann::json& body, const MaskedScoreRequest& req);
std::vector<LogProb> decode_causal(const nlohmann::json& body, const CausalScoreRequest& req);

}  // namespace wire

/// Client for the model-serving sidecar:
///   POST /v1/score/masked  {"words", "filled", "targets"} -> {"logprobs": {"<k>": x}}
///   POST /v1/score/causal  {"words"}                      -> {"logprobs": [x...]}
///   GET  /v1/health
/// At most `max_concurrent_requests` requests are in flight across all
/// threads sharing one instance.
class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteOptions options);
  ~RemoteScorer() override;

  RemoteScorer(const RemoteScorer&) = delete;
  RemoteScorer& operator=(const RemoteScorer&) = delete;

  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::vector<PositionScores> score_states(std::span<const MaskedScoreRequest> reqs) const override;
  std::string describe() const override { return "remote:" + options_.endpoint; }

  HealthStatus health() const;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  std::unique_ptr<httplib::Client> acquire() const;
  void release(std::unique_ptr<httplib::Client> client) const;
  std::unique_ptr<httplib::Client> make_client() const;

  RemoteOptions options_;
  std::string base_url_;
  std::string path_prefix_;

  mutable std::mutex pool_mutex_;
  mutable std::condition_variable pool_cv_;
  mutable std::vector<std::unique_ptr<httplib::Client>> idle_;
  mutable std::size_t in_flight_ = 0;
};

}  // namespace mlorder
