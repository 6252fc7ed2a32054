#include "mlorder/remote_scorer.hpp"

#include <cmath>
#include <future>
#include <regex>
#include <thread>

#include <httplib.h>

namespace mlorder {

namespace wire {

nlohmann::json encode_masked(const MaskedScoreRequest& req) {
  return {
      {"words", req.sentence.words()},
      {"filled", req.state.filled_positions()},
      {"targets", req.targets},
  };
}

nlohmann::json encode_causal(const CausalScoreRequest& req) {
  return {{"words", req.sentence.words()}};
}

namespace {

LogProb decode_value(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) {
    throw ScorerError(ScorerError::Kind::protocol, where + " is not a number");
  }
  const double x = v.get<double>();
  if (std::isnan(x) || x > 0.0) {
    throw ScorerError(ScorerError::Kind::protocol, where + " is not a log-probability");
  }
  return LogProb(x);
}

const nlohmann::json& logprobs_field(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("logprobs")) {
    throw ScorerError(ScorerError::Kind::protocol, "response has no 'logprobs' field");
  }
  return body.at("logprobs");
}

}  // namespace

PositionScores decode_masked(const nlohmann::json& body, const MaskedScoreRequest& req) {
  const auto& lp = logprobs_field(body);
  if (!lp.is_object()) {
    throw ScorerError(ScorerError::Kind::protocol, "masked 'logprobs' must be an object");
  }
  if (lp.size() != req.targets.size()) {
    throw ScorerError(ScorerError::Kind::protocol,
                      "masked response has " + std::to_string(lp.size()) + " entries for " +
                          std::to_string(req.targets.size()) + " targets");
  }
  PositionScores out;
  for (auto k : req.targets) {
    const auto key = std::to_string(k);
    auto it = lp.find(key);
    if (it == lp.end()) {
      throw ScorerError(ScorerError::Kind::protocol, "masked response is missing target " + key);
    }
    out.emplace(k, decode_value(*it, "logprobs[\"" + key + "\"]"));
  }
  return out;
}

std::vector<LogProb> decode_causal(const nlohmann::json& body, const CausalScoreRequest& req) {
  const auto& lp = logprobs_field(body);
  if (!lp.is_array() || lp.size() != req.sentence.size()) {
    throw ScorerError(ScorerError::Kind::protocol,
                      "causal 'logprobs' must be an array with one entry per word");
  }
  std::vector<LogProb> out;
  out.reserve(lp.size());
  for (std::size_t k = 0; k < lp.size(); ++k) {
    out.push_back(decode_value(lp[k], "logprobs[" + std::to_string(k) + "]"));
  }
  return out;
}

}  // namespace wire

// ---------------------------------------------------------------------------

RemoteScorer::RemoteScorer(RemoteOptions options) : options_(std::move(options)) {
  static const std::regex kEndpoint(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.endpoint, m, kEndpoint)) {
    throw ConfigError("remote endpoint must look like http://host:port[/prefix], got '" +
                      options_.endpoint + "'");
  }
  base_url_ = m[1].str();
  path_prefix_ = m[2].str();
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (options_.batch_size < 1 || options_.max_concurrent_requests < 1) {
    throw ConfigError("batch size and max concurrent requests must be >= 1");
  }
}

RemoteScorer::~RemoteScorer() = default;

std::unique_ptr<httplib::Client> RemoteScorer::make_client() const {
  auto client = std::make_unique<httplib::Client>(base_url_);
  client->set_connection_timeout(options_.timeout);
  client->set_read_timeout(options_.timeout);
  client->set_write_timeout(options_.timeout);
  client->set_keep_alive(true);
  return client;
}

std::unique_ptr<httplib::Client> RemoteScorer::acquire() const {
  std::unique_lock lock(pool_mutex_);
  pool_cv_.wait(lock, [&] { return in_flight_ < options_.max_concurrent_requests; });
  ++in_flight_;
  if (!idle_.empty()) {
    auto c = std::move(idle_.back());
    idle_.pop_back();
    return c;
  }
  lock.unlock();
  return make_client();
}

void RemoteScorer::release(std::unique_ptr<httplib::Client> client) const {
  {
    std::lock_guard lock(pool_mutex_);
    --in_flight_;
    if (client) idle_.push_back(std::move(client));
  }
  pool_cv_.notify_one();
}

nlohmann::json RemoteScorer::post(const std::string& path, const nlohmann::json& body) const {
  const auto payload = body.dump();
  const auto full_path = path_prefix_ + path;
  for (std::size_t attempt = 0;; ++attempt) {
    auto client = acquire();
    auto res = client->Post(full_path, payload, "application/json");
    if (!res) {
      // Drop the connection; it may be half-open.
      release(nullptr);
      if (attempt < options_.retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
        continue;
      }
      throw ScorerError(ScorerError::Kind::transport,
                        "POST " + base_url_ + full_path + " failed: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    std::string response_body = res->body;
    release(std::move(client));

    if (status >= 500) {
      if (attempt < options_.retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
        continue;
      }
      throw ScorerError(ScorerError::Kind::transport, "POST " + base_url_ + full_path +
                                                          " returned HTTP " + std::to_string(status));
    }
    if (status != 200) {
      throw ScorerError(ScorerError::Kind::protocol, "POST " + base_url_ + full_path +
                                                         " returned HTTP " + std::to_string(status) +
                                                         ": " + response_body);
    }
    auto parsed = nlohmann::json::parse(response_body, nullptr, false);
    if (parsed.is_discarded()) {
      throw ScorerError(ScorerError::Kind::protocol, "response from " + full_path + " is not JSON");
    }
    return parsed;
  }
}

PositionScores RemoteScorer::score_state(const MaskedScoreRequest& req) const {
  validate_request(req);
  return wire::decode_masked(post("/v1/score/masked", wire::encode_masked(req)), req);
}

std::vector<LogProb> RemoteScorer::score_causal(const CausalScoreRequest& req) const {
  return wire::decode_causal(post("/v1/score/causal", wire::encode_causal(req)), req);
}

std::vector<PositionScores> RemoteScorer::score_states(
    std::span<const MaskedScoreRequest> reqs) const {
  std::vector<PositionScores> out;
  out.reserve(reqs.size());
  for (std::size_t start = 0; start < reqs.size(); start += options_.batch_size) {
    const auto end = std::min(reqs.size(), start + options_.batch_size);
    std::vector<std::future<PositionScores>> pending;
    pending.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, [this, &r = reqs[i]] {
        try {
          return score_state(r);
        } catch (const ScorerError& e) {
          throw e.with_state(r.sentence.id(), r.state);
        }
      }));
    }
    // Drain every future before rethrowing so no task outlives `reqs`.
    std::exception_ptr first_error;
    for (auto& f : pending) {
      try {
        out.push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }
  return out;
}

HealthStatus RemoteScorer::health() const {
  HealthStatus status;
  auto client = acquire();
  auto res = client->Get(path_prefix_ + "/v1/health");
  if (!res) {
    release(nullptr);
    return status;
  }
  status.http_status = res->status;
  auto body = nlohmann::json::parse(res->body, nullptr, false);
  release(std::move(client));
  if (res->status == 200 && body.is_object()) {
    status.ok = body.value("status", "") == "ok";
    status.masked_model = body.value("masked_model", "");
    status.causal_model = body.value("causal_model", "");
  }
  return status;
}

}  // namespace mlorder
