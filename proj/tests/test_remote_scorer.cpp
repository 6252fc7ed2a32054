#include "mlorder/remote_scorer.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "mlorder/lattice.hpp"

namespace mlorder {
namespace {

using nlohmann::json;

// In-process stand-in for the model-serving sidecar. Answers with the
// neighbor rule so results can be compared against NeighborScorer.
class FakeSidecar {
 public:
  enum class Mode { ok, missing_target, extra_target, not_json, positive_value, flaky, bad_request };

  FakeSidecar() {
    server_.Post("/v1/score/masked", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = max_in_flight_.load();
      while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(delay_.load());
      handle_masked(req, res);
      --in_flight_;
    });
    server_.Post("/v1/score/causal", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      const auto n = body.at("words").size();
      json lp = json::array();
      for (std::size_t k = 0; k < n; ++k) {
        lp.push_back(std::log((1.0 + (k > 0 ? 1 : 0)) / 4.0));
      }
      res.set_content(json{{"logprobs", lp}}.dump(), "application/json");
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      if (!loaded_) {
        res.status = 503;
        res.set_content(R"({"status":"loading"})", "application/json");
        return;
      }
      res.set_content(R"({"status":"ok","masked_model":"fake-mlm","causal_model":"fake-lm"})",
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeSidecar() { server_.stop(); }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<Mode> mode{Mode::ok};
  std::atomic<int> requests{0};
  std::atomic<bool> loaded_{true};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<std::chrono::milliseconds> delay_{std::chrono::milliseconds(0)};
  json last_request;
  std::mutex last_mutex;

 private:
  void handle_masked(const httplib::Request& req, httplib::Response& res) {
    const int count = ++requests;
    const auto body = json::parse(req.body);
    {
      std::lock_guard lock(last_mutex);
      last_request = body;
    }
    if (mode == Mode::flaky && count % 2 == 1) {
      res.status = 503;
      return;
    }
    if (mode == Mode::bad_request) {
      res.status = 400;
      res.set_content("bad", "text/plain");
      return;
    }
    if (mode == Mode::not_json) {
      res.set_content("<html>", "text/html");
      return;
    }
    const auto n = body.at("words").size();
    std::vector<bool> filled(n, false);
    for (auto k : body.at("filled")) filled[k.get<std::size_t>()] = true;
    json lp = json::object();
    for (auto kj : body.at("targets")) {
      const auto k = kj.get<std::size_t>();
      int adj = 0;
      if (k > 0 && filled[k - 1]) ++adj;
      if (k + 1 < n && filled[k + 1]) ++adj;
      lp[std::to_string(k)] = std::log((1.0 + adj) / 4.0);
    }
    if (mode == Mode::missing_target) lp.erase(lp.begin());
    if (mode == Mode::extra_target) lp["99"] = -1.0;
    if (mode == Mode::positive_value) lp[lp.begin().key()] = 0.5;
    res.set_content(json{{"logprobs", lp}}.dump(), "application/json");
  }

  httplib::Server server_;
  int port_ = 0;
  std::jthread thread_;
};

Sentence three_words() { return Sentence("s3", "la casa azul", {"la", "casa", "azul"}); }

RemoteOptions options_for(const FakeSidecar& fake) {
  RemoteOptions o;
  o.endpoint = fake.endpoint();
  o.timeout = std::chrono::milliseconds(5000);
  return o;
}

TEST(Wire, GoldenMaskedRequest) {
  const auto s = three_words();
  const MaskedScoreRequest req{s, SubsetState(3, 0b001), {1, 2}};
  EXPECT_EQ(wire::encode_masked(req),
            json::parse(R"({"words":["la","casa","azul"],"filled":[0],"targets":[1,2]})"));
  EXPECT_EQ(wire::encode_causal({s}), json::parse(R"({"words":["la","casa","azul"]})"));
}

TEST(Wire, GoldenMaskedResponse) {
  const auto s = three_words();
  const MaskedScoreRequest req{s, SubsetState(3, 0b001), {1, 2}};
  const auto out = wire::decode_masked(json::parse(R"({"logprobs":{"1":-0.5,"2":-1.25}})"), req);
  EXPECT_EQ(out.at(1).value(), -0.5);
  EXPECT_EQ(out.at(2).value(), -1.25);
}

TEST(Wire, RejectsIncompleteOrInvalidResponses) {
  const auto s = three_words();
  const MaskedScoreRequest req{s, SubsetState(3, 0b001), {1, 2}};
  const char* bad[] = {
      R"({"logprobs":{"1":-0.5}})",
      R"({"logprobs":{"1":-0.5,"2":-1,"0":-1}})",
      R"({"logprobs":{"1":-0.5,"0":-1}})",
      R"({"logprobs":{"1":0.5,"2":-1}})",
      R"({"logprobs":{"1":"x","2":-1}})",
      R"({"logprobs":[-0.5,-1]})",
      R"({"other":1})",
  };
  for (const char* b : bad) {
    try {
      wire::decode_masked(json::parse(b), req);
      ADD_FAILURE() << "accepted " << b;
    } catch (const ScorerError& e) {
      EXPECT_EQ(e.kind(), ScorerError::Kind::protocol) << b;
    }
  }
  EXPECT_THROW(wire::decode_causal(json::parse(R"({"logprobs":[-1,-1]})"), {s}), ScorerError);
  EXPECT_NO_THROW(wire::decode_causal(json::parse(R"({"logprobs":[-1,-1,-2]})"), {s}));
}

TEST(RemoteScorer, RejectsBadEndpoints) {
  RemoteOptions o;
  o.endpoint = "https://example.com";
  EXPECT_THROW(RemoteScorer{o}, ConfigError);
  o.endpoint = "localhost:8000";
  EXPECT_THROW(RemoteScorer{o}, ConfigError);
}

TEST(RemoteScorer, MatchesNeighborScorerOverHttp) {
  FakeSidecar fake;
  const RemoteScorer remote(options_for(fake));
  const NeighborScorer local;
  const auto s = three_words();
  for (Mask f = 0; f < 7; ++f) {
    const auto req = full_request(s, SubsetState(3, f));
    const auto got = remote.score_state(req);
    const auto want = local.score_state(req);
    ASSERT_EQ(got.size(), want.size());
    for (const auto& [k, lp] : want) EXPECT_DOUBLE_EQ(got.at(k).value(), lp.value());
  }
  const auto causal = remote.score_causal({s});
  const auto want_causal = local.score_causal({s});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(causal[k].value(), want_causal[k].value());

  const auto r = viterbi_optimal_order(s, remote);
  EXPECT_EQ(r.order.order(), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_NEAR(r.logp.value(), std::log(1.0 / 16.0), 1e-12);
}

TEST(RemoteScorer, SendsFilledAndTargetsOnTheWire) {
  FakeSidecar fake;
  const RemoteScorer remote(options_for(fake));
  const auto s = three_words();
  remote.score_state({s, SubsetState(3, 0b101), {1}});
  std::lock_guard lock(fake.last_mutex);
  EXPECT_EQ(fake.last_request,
            json::parse(R"({"words":["la","casa","azul"],"filled":[0,2],"targets":[1]})"));
}

TEST(RemoteScorer, ProtocolViolationsAreErrors) {
  FakeSidecar fake;
  const RemoteScorer remote(options_for(fake));
  const auto s = three_words();
  for (auto mode : {FakeSidecar::Mode::missing_target, FakeSidecar::Mode::extra_target,
                    FakeSidecar::Mode::not_json, FakeSidecar::Mode::positive_value,
                    FakeSidecar::Mode::bad_request}) {
    fake.mode = mode;
    try {
      remote.score_state(full_request(s, SubsetState(3, 0)));
      ADD_FAILURE() << "mode " << static_cast<int>(mode) << " accepted";
    } catch (const ScorerError& e) {
      EXPECT_EQ(e.kind(), ScorerError::Kind::protocol);
      EXPECT_FALSE(e.retriable());
    }
  }
}

TEST(RemoteScorer, ServerErrorsAreRetried) {
  FakeSidecar fake;
  fake.mode = FakeSidecar::Mode::flaky;
  auto o = options_for(fake);
  o.retries = 1;
  const RemoteScorer remote(o);
  const auto s = three_words();
  EXPECT_NO_THROW(remote.score_state(full_request(s, SubsetState(3, 0))));
  EXPECT_EQ(fake.requests.load(), 2);

  o.retries = 0;
  const RemoteScorer no_retry(o);
  try {
    no_retry.score_state(full_request(s, SubsetState(3, 0)));
    FAIL() << "expected a transport error";
  } catch (const ScorerError& e) {
    EXPECT_EQ(e.kind(), ScorerError::Kind::transport);
  }
}

TEST(RemoteScorer, UnreachableSidecarIsRetriableTransportError) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteOptions o;
  o.endpoint = "http://127.0.0.1:" + std::to_string(port);
  o.timeout = std::chrono::milliseconds(500);
  o.retries = 0;
  const RemoteScorer remote(o);
  const auto s = three_words();
  try {
    remote.score_state(full_request(s, SubsetState(3, 0)));
    FAIL() << "expected a transport error";
  } catch (const ScorerError& e) {
    EXPECT_EQ(e.kind(), ScorerError::Kind::transport);
    EXPECT_TRUE(e.retriable());
  }
  EXPECT_FALSE(remote.health().ok);
}

TEST(RemoteScorer, LatticeErrorNamesTheState) {
  FakeSidecar fake;
  fake.mode = FakeSidecar::Mode::missing_target;
  const RemoteScorer remote(options_for(fake));
  const auto s = three_words();
  try {
    viterbi_optimal_order(s, remote);
    FAIL() << "expected an error";
  } catch (const ScorerError& e) {
    ASSERT_TRUE(e.state().has_value());
    EXPECT_NE(std::string(e.what()).find("s3"), std::string::npos);
  }
}

TEST(RemoteScorer, Health) {
  FakeSidecar fake;
  const RemoteScorer remote(options_for(fake));
  auto h = remote.health();
  EXPECT_TRUE(h.ok);
  EXPECT_EQ(h.http_status, 200);
  EXPECT_EQ(h.masked_model, "fake-mlm");
  EXPECT_EQ(h.causal_model, "fake-lm");

  fake.loaded_ = false;
  h = remote.health();
  EXPECT_FALSE(h.ok);
  EXPECT_EQ(h.http_status, 503);

  auto o = options_for(fake);
  o.endpoint += "/nowhere";
  EXPECT_EQ(RemoteScorer(o).health().http_status, 404);
}

TEST(RemoteScorer, ConcurrencyIsBounded) {
  FakeSidecar fake;
  fake.delay_ = std::chrono::milliseconds(20);
  auto o = options_for(fake);
  o.max_concurrent_requests = 2;
  o.batch_size = 8;
  const RemoteScorer remote(o);
  const Sentence s("s5", "a b c d e", {"a", "b", "c", "d", "e"});
  std::vector<MaskedScoreRequest> reqs;
  for (Mask f = 0; f < 31; ++f) reqs.push_back(full_request(s, SubsetState(5, f)));
  std::vector<std::jthread> callers;
  for (int t = 0; t < 3; ++t) callers.emplace_back([&] { remote.score_states(reqs); });
  callers.clear();
  EXPECT_LE(fake.max_in_flight_.load(), 2);
  EXPECT_GE(fake.max_in_flight_.load(), 1);
}

TEST(RemoteScorer, BatchingDoesNotChangeResults) {
  FakeSidecar fake;
  const Sentence s("s4", "a b c d", {"a", "b", "c", "d"});
  std::vector<MaskedScoreRequest> reqs;
  for (Mask f = 0; f < 15; ++f) reqs.push_back(full_request(s, SubsetState(4, f)));
  std::vector<PositionScores> baseline;
  for (const auto& r : reqs) baseline.push_back(NeighborScorer().score_state(r));
  for (std::size_t batch : {1, 3, 32}) {
    auto o = options_for(fake);
    o.batch_size = batch;
    o.max_concurrent_requests = 3;
    const RemoteScorer remote(o);
    const auto got = remote.score_states(reqs);
    ASSERT_EQ(got.size(), baseline.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].size(), baseline[i].size());
      for (const auto& [k, lp] : baseline[i]) EXPECT_DOUBLE_EQ(got[i].at(k).value(), lp.value());
    }
  }
}

}  // namespace
}  // namespace mlorder
