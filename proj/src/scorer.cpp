#include "mlorder/scorer.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>

#include "mlorder/remote_scorer.hpp"

namespace mlorder {

MaskedScoreRequest full_request(const Sentence& sentence, SubsetState state) {
  return MaskedScoreRequest{sentence, state, state.masked_positions()};
}

void validate_request(const MaskedScoreRequest& req) {
  const auto n = req.sentence.size();
  if (req.state.n() != n) {
    throw ContractViolation("state width " + std::to_string(req.state.n()) +
                            " does not match sentence length " + std::to_string(n));
  }
  if (req.targets.empty()) throw ContractViolation("masked request has no targets");
  Mask seen = 0;
  for (auto k : req.targets) {
    if (k >= n) {
      throw ContractViolation("target " + std::to_string(k) + " out of range for " +
                              std::to_string(n) + " words");
    }
    if (req.state.contains(k)) {
      throw ContractViolation("target " + std::to_string(k) + " is already filled");
    }
    if ((seen >> k) & 1U) throw ContractViolation("target " + std::to_string(k) + " repeated");
    seen |= Mask{1} << k;
  }
}

ScorerError::ScorerError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

ScorerError ScorerError::with_state(const std::string& sentence_id,
                                    const SubsetState& state) const {
  auto label = "sentence '" + sentence_id + "' state " + to_string(state);
  ScorerError e(kind_, std::string(what()) + " [while scoring " + label + "]");
  e.state_ = std::move(label);
  return e;
}

std::vector<PositionScores> Scorer::score_states(std::span<const MaskedScoreRequest> reqs) const {
  std::vector<PositionScores> out;
  out.reserve(reqs.size());
  for (const auto& r : reqs) {
    try {
      out.push_back(score_state(r));
    } catch (const ScorerError& e) {
      if (e.state()) throw;
      throw e.with_state(r.sentence.id(), r.state);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

UniformScorer::UniformScorer(double p) : p_(p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("uniform scorer probability must be in (0, 1], got " + std::to_string(p));
  }
  logp_ = LogProb::from_probability(p);
}

PositionScores UniformScorer::score_state(const MaskedScoreRequest& req) const {
  validate_request(req);
  PositionScores out;
  for (auto k : req.targets) out.emplace(k, logp_);
  return out;
}

std::vector<LogProb> UniformScorer::score_causal(const CausalScoreRequest& req) const {
  return std::vector<LogProb>(req.sentence.size(), logp_);
}

std::string UniformScorer::describe() const {
  return "ref:uniform:" + std::to_string(p_);
}

double NeighborScorer::probability(std::size_t k, const SubsetState& filled) {
  int adjacent = 0;
  if (k > 0 && filled.contains(k - 1)) ++adjacent;
  if (filled.contains(k + 1)) ++adjacent;
  return (1.0 + adjacent) / 4.0;
}

PositionScores NeighborScorer::score_state(const MaskedScoreRequest& req) const {
  validate_request(req);
  PositionScores out;
  for (auto k : req.targets) {
    out.emplace(k, LogProb::from_probability(probability(k, req.state)));
  }
  return out;
}

std::vector<LogProb> NeighborScorer::score_causal(const CausalScoreRequest& req) const {
  const auto n = req.sentence.size();
  std::vector<LogProb> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(LogProb::from_probability(probability(k, SubsetState(n, SubsetState::full_mask(k)))));
  }
  return out;
}

// ---------------------------------------------------------------------------

TableScorer::TableScorer(ScoreTable table, std::string name)
    : table_(std::move(table)), name_(std::move(name)) {}

PositionScores TableScorer::score_state(const MaskedScoreRequest& req) const {
  validate_request(req);
  PositionScores out;
  for (auto k : req.targets) {
    auto p = table_.masked(req.state.filled(), k);
    if (!p) {
      throw ScorerError(ScorerError::Kind::missing_entry,
                        name_ + ": no masked entry for filled " + to_string(req.state) +
                            " target " + std::to_string(k));
    }
    out.emplace(k, LogProb::from_probability(*p));
  }
  return out;
}

std::vector<LogProb> TableScorer::score_causal(const CausalScoreRequest& req) const {
  std::vector<LogProb> out;
  out.reserve(req.sentence.size());
  for (std::size_t k = 0; k < req.sentence.size(); ++k) {
    auto p = table_.causal(k);
    if (!p) {
      throw ScorerError(ScorerError::Kind::missing_entry,
                        name_ + ": no causal entry for target " + std::to_string(k));
    }
    out.push_back(LogProb::from_probability(*p));
  }
  return out;
}

TableDirectoryScorer::TableDirectoryScorer(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw ConfigError("table directory '" + dir_.string() + "' does not exist");
  }
}

std::string TableDirectoryScorer::describe() const { return "table:" + dir_.string(); }

const TableScorer& TableDirectoryScorer::table_for(const Sentence& sentence) const {
  std::lock_guard lock(mutex_);
  auto it = loaded_.find(sentence.id());
  if (it != loaded_.end()) return *it->second;

  auto path = dir_ / (sentence.id() + ".tbl");
  if (!std::filesystem::exists(path)) path = dir_ / "default.tbl";
  if (!std::filesystem::exists(path)) {
    throw ScorerError(ScorerError::Kind::missing_entry,
                      "no table file for sentence '" + sentence.id() + "' in " + dir_.string());
  }
  auto scorer = std::make_shared<const TableScorer>(ScoreTable::load(path), path.string());
  return *loaded_.emplace(sentence.id(), std::move(scorer)).first->second;
}

PositionScores TableDirectoryScorer::score_state(const MaskedScoreRequest& req) const {
  return table_for(req.sentence).score_state(req);
}

std::vector<LogProb> TableDirectoryScorer::score_causal(const CausalScoreRequest& req) const {
  return table_for(req.sentence).score_causal(req);
}

// ---------------------------------------------------------------------------

CachedScorer::CachedScorer(ScorerPtr inner) : inner_(std::move(inner)) {
  if (!inner_) throw ContractViolation("cannot cache a null scorer");
}

namespace {

PositionScores select_targets(const PositionScores& all, const MaskedScoreRequest& req) {
  PositionScores out;
  for (auto k : req.targets) out.emplace(k, all.at(k));
  return out;
}

}  // namespace

PositionScores CachedScorer::score_state(const MaskedScoreRequest& req) const {
  validate_request(req);
  MaskedKey key{req.sentence.id(), req.state.filled()};

  std::promise<PositionScores> promise;
  std::shared_future<PositionScores> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = masked_.find(key);
    if (it == masked_.end()) {
      future = promise.get_future().share();
      masked_.emplace(key, future);
      ++masked_calls_;
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(inner_->score_state(full_request(req.sentence, req.state)));
    } catch (...) {
      // Failures are not memoized; the next caller retries.
      {
        std::lock_guard lock(mutex_);
        masked_.erase(key);
      }
      promise.set_exception(std::current_exception());
    }
  }
  return select_targets(future.get(), req);
}

std::vector<PositionScores> CachedScorer::score_states(
    std::span<const MaskedScoreRequest> reqs) const {
  // Forward all misses as one batch so the wrapped scorer can overlap them.
  std::vector<std::size_t> miss_index;
  std::vector<MaskedScoreRequest> misses;
  std::vector<std::promise<PositionScores>> promises;
  std::vector<std::shared_future<PositionScores>> futures;
  futures.reserve(reqs.size());
  for (const auto& r : reqs) validate_request(r);
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      MaskedKey key{reqs[i].sentence.id(), reqs[i].state.filled()};
      auto it = masked_.find(key);
      if (it != masked_.end()) {
        futures.push_back(it->second);
        continue;
      }
      promises.emplace_back();
      auto f = promises.back().get_future().share();
      masked_.emplace(key, f);
      futures.push_back(f);
      miss_index.push_back(i);
      misses.push_back(full_request(reqs[i].sentence, reqs[i].state));
      ++masked_calls_;
    }
  }
  if (!misses.empty()) {
    try {
      auto results = inner_->score_states(misses);
      for (std::size_t j = 0; j < results.size(); ++j) promises[j].set_value(std::move(results[j]));
    } catch (...) {
      {
        std::lock_guard lock(mutex_);
        for (auto i : miss_index) masked_.erase({reqs[i].sentence.id(), reqs[i].state.filled()});
      }
      for (auto& p : promises) p.set_exception(std::current_exception());
      throw;
    }
  }
  std::vector<PositionScores> out;
  out.reserve(reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) out.push_back(select_targets(futures[i].get(), reqs[i]));
  return out;
}

std::vector<LogProb> CachedScorer::score_causal(const CausalScoreRequest& req) const {
  std::promise<std::vector<LogProb>> promise;
  std::shared_future<std::vector<LogProb>> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = causal_.find(req.sentence.id());
    if (it == causal_.end()) {
      future = promise.get_future().share();
      causal_.emplace(req.sentence.id(), future);
      ++causal_calls_;
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(inner_->score_causal(req));
    } catch (...) {
      {
        std::lock_guard lock(mutex_);
        causal_.erase(req.sentence.id());
      }
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

std::uint64_t CachedScorer::masked_backend_calls() const {
  std::lock_guard lock(mutex_);
  return masked_calls_;
}

std::uint64_t CachedScorer::causal_backend_calls() const {
  std::lock_guard lock(mutex_);
  return causal_calls_;
}

ScorerPtr with_cache(ScorerPtr inner) { return std::make_shared<CachedScorer>(std::move(inner)); }

// ---------------------------------------------------------------------------

ScorerConfig parse_scorer_config(std::string_view spec, const char* endpoint_env) {
  ScorerConfig config;
  if (spec == "ref:neighbor") {
    config.kind = NeighborKind{};
  } else if (spec.starts_with("ref:uniform:")) {
    auto arg = spec.substr(std::string_view("ref:uniform:").size());
    double p = 0.0;
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), p);
    if (ec != std::errc{} || ptr != arg.data() + arg.size()) {
      throw ConfigError("bad uniform probability '" + std::string(arg) + "'");
    }
    config.kind = UniformKind{p};
  } else if (spec.starts_with("table:")) {
    auto path = spec.substr(6);
    if (path.empty()) throw ConfigError("table scorer needs a path");
    config.kind = TableKind{std::filesystem::path(std::string(path))};
  } else if (spec == "remote" || spec.starts_with("remote:")) {
    std::string endpoint;
    if (spec.size() > 7) endpoint = std::string(spec.substr(7));
    if (endpoint.empty() && endpoint_env != nullptr) {
      if (const char* env = std::getenv(endpoint_env)) endpoint = env;
    }
    if (endpoint.empty()) {
      throw ConfigError(std::string("remote scorer needs an endpoint") +
                        (endpoint_env ? std::string(" (flag or ") + endpoint_env + ")" : ""));
    }
    config.kind = RemoteKind{endpoint};
  } else {
    throw ConfigError("unknown scorer '" + std::string(spec) +
                      "'; expected ref:uniform:<p>, ref:neighbor, table:<path> or remote:<url>");
  }
  validate(config);
  return config;
}

void validate(const ScorerConfig& config) {
  if (const auto* u = std::get_if<UniformKind>(&config.kind)) {
    if (!(u->p > 0.0 && u->p <= 1.0)) {
      throw ConfigError("uniform probability must be in (0, 1], got " + std::to_string(u->p));
    }
  }
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (config.max_concurrent_requests < 1) throw ConfigError("max concurrent requests must be >= 1");
  if (config.timeout.count() <= 0) throw ConfigError("timeout must be positive");
}

ScorerPtr make_scorer(const ScorerConfig& config) {
  validate(config);
  return std::visit(
      [&](const auto& kind) -> ScorerPtr {
        using K = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<K, UniformKind>) {
          return std::make_shared<UniformScorer>(kind.p);
        } else if constexpr (std::is_same_v<K, NeighborKind>) {
          return std::make_shared<NeighborScorer>();
        } else if constexpr (std::is_same_v<K, TableKind>) {
          if (std::filesystem::is_directory(kind.path)) {
            return std::make_shared<TableDirectoryScorer>(kind.path);
          }
          return std::make_shared<TableScorer>(ScoreTable::load(kind.path),
                                               "table:" + kind.path.string());
        } else {
          RemoteOptions opts;
          opts.endpoint = kind.endpoint;
          opts.batch_size = config.batch_size;
          opts.max_concurrent_requests = config.max_concurrent_requests;
          opts.timeout = config.timeout;
          opts.retries = config.retries;
          return std::make_shared<RemoteScorer>(std::move(opts));
        }
      },
      config.kind);
}

}  // namespace mlorder
