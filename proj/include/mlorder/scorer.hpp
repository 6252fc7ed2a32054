#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mlorder/core.hpp"

namespace mlorder {

/// Score the true word at each target position given a partially filled
/// sentence. Every slot outside `state` is masked, targets included.
struct MaskedScoreRequest {
  const Sentence& sentence;
  SubsetState state;
  std::vector<std::size_t> targets;
};

struct CausalScoreRequest {
  const Sentence& sentence;
};

using PositionScores = std::map<std::size_t, LogProb>;

/// Request covering every masked slot of `state`.
MaskedScoreRequest full_request(const Sentence& sentence, SubsetState state);

/// Throws ContractViolation unless the request is well formed: state width
/// matches the sentence, targets are non-empty, in range, unique and masked.
void validate_request(const MaskedScoreRequest& req);

class ScorerError : public Error {
 public:
  enum class Kind {
    transport,      // retriable: connection refused, timeout, 5xx
    protocol,       // malformed or incomplete response
    missing_entry,  // table fixture is not total for the request
  };

  ScorerError(Kind kind, const std::string& what);

  Kind kind() const noexcept { return kind_; }
  bool retriable() const noexcept { return kind_ == Kind::transport; }
  const std::optional<std::string>& state() const noexcept { return state_; }

  /// Copy of this error annotated with the lattice state being scored.
  ScorerError with_state(const std::string& sentence_id, const SubsetState& state) const;

 private:
  Kind kind_;
  std::optional<std::string> state_;
};

/// Source of true-word log-probabilities. Implementations are shareable
/// across threads; every method is const and must be safe to call
/// concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual PositionScores score_state(const MaskedScoreRequest& req) const = 0;

  /// Entry k conditions on words 0..k-1 only.
  virtual std::vector<LogProb> score_causal(const CausalScoreRequest& req) const = 0;

  /// Score several states of one sentence. The default scores them one after
  /// another; implementations may overlap requests. Results line up with
  /// `reqs` and never depend on how requests were grouped.
  virtual std::vector<PositionScores> score_states(std::span<const MaskedScoreRequest> reqs) const;

  virtual std::string describe() const = 0;
};

using ScorerPtr = std::shared_ptr<const Scorer>;

// ---------------------------------------------------------------------------
// Reference scorers
// ---------------------------------------------------------------------------

/// Context-free: every word has probability p.
class UniformScorer final : public Scorer {
 public:
  explicit UniformScorer(double p);

  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::string describe() const override;

 private:
  double p_;
  LogProb logp_;
};

/// P(fill k | filled F) = (1 + |{k-1, k+1} & F|) / 4. Causal scores use the
/// same rule with F = {0..k-1}.
class NeighborScorer final : public Scorer {
 public:
  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::string describe() const override { return "ref:neighbor"; }

  static double probability(std::size_t k, const SubsetState& filled);
};

/// Explicit (filled set, target) -> probability table plus causal entries.
/// Text form, one record per line:
///   masked:<comma-list of filled positions or none>,target:<k>,p:<decimal>
///   causal,target:<k>,p:<decimal>
/// `#` starts a comment.
class ScoreTable {
 public:
  void set_masked(Mask filled, std::size_t target, double p);
  void set_causal(std::size_t target, double p);

  std::optional<double> masked(Mask filled, std::size_t target) const;
  std::optional<double> causal(std::size_t target) const;

  std::size_t masked_size() const noexcept { return masked_.size(); }
  std::size_t causal_size() const noexcept { return causal_.size(); }

  static ScoreTable parse(std::istream& in, const std::string& source);
  static ScoreTable load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  /// Total table for an n-word lattice with log-uniform probabilities in
  /// [1e-4, 1), reproducible from `seed`.
  static ScoreTable random(std::size_t n, std::uint64_t seed);

 private:
  std::map<std::pair<Mask, std::size_t>, double> masked_;
  std::map<std::size_t, double> causal_;
};

/// Serves lookups from a ScoreTable. Missing entries are a hard error.
class TableScorer final : public Scorer {
 public:
  explicit TableScorer(ScoreTable table, std::string name = "table");

  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::string describe() const override { return name_; }

  const ScoreTable& table() const noexcept { return table_; }

 private:
  ScoreTable table_;
  std::string name_;
};

/// Per-sentence tables: `<dir>/<sentence id>.tbl`, falling back to
/// `<dir>/default.tbl`. Files are loaded on first use.
class TableDirectoryScorer final : public Scorer {
 public:
  explicit TableDirectoryScorer(std::filesystem::path dir);

  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::string describe() const override;

 private:
  const TableScorer& table_for(const Sentence& sentence) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const TableScorer>> loaded_;
};

// ---------------------------------------------------------------------------
// Memoization
// ---------------------------------------------------------------------------

/// Evaluates each distinct (sentence id, filled set) masked request and each
/// distinct causal sentence at most once, even under concurrent use. Misses
/// are always scored against the full masked complement so any later target
/// subset of the same state is a hit.
class CachedScorer final : public Scorer {
 public:
  explicit CachedScorer(ScorerPtr inner);

  PositionScores score_state(const MaskedScoreRequest& req) const override;
  std::vector<LogProb> score_causal(const CausalScoreRequest& req) const override;
  std::vector<PositionScores> score_states(std::span<const MaskedScoreRequest> reqs) const override;
  std::string describe() const override { return "cached(" + inner_->describe() + ")"; }

  std::uint64_t masked_backend_calls() const;
  std::uint64_t causal_backend_calls() const;

 private:
  using MaskedKey = std::pair<std::string, Mask>;
  struct KeyHash {
    std::size_t operator()(const MaskedKey& k) const noexcept {
      return std::hash<std::string>{}(k.first) ^ (std::hash<Mask>{}(k.second) * 0x9e3779b97f4a7c15ULL);
    }
  };

  ScorerPtr inner_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<MaskedKey, std::shared_future<PositionScores>, KeyHash> masked_;
  mutable std::unordered_map<std::string, std::shared_future<std::vector<LogProb>>> causal_;
  mutable std::uint64_t masked_calls_ = 0;
  mutable std::uint64_t causal_calls_ = 0;
};

ScorerPtr with_cache(ScorerPtr inner);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct UniformKind {
  double p;
};
struct NeighborKind {};
struct TableKind {
  std::filesystem::path path;
};
struct RemoteKind {
  std::string endpoint;
};

struct ScorerConfig {
  std::variant<UniformKind, NeighborKind, TableKind, RemoteKind> kind = NeighborKind{};
  std::size_t batch_size = 32;
  std::size_t max_concurrent_requests = 4;
  std::chrono::milliseconds timeout{30000};
  std::size_t retries = 2;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parse `ref:uniform:<p>`, `ref:neighbor`, `table:<path>`, `remote:<url>` or
/// bare `remote` (endpoint taken from `endpoint_env`, if given).
ScorerConfig parse_scorer_config(std::string_view spec, const char* endpoint_env = nullptr);

/// Throws ConfigError for invalid parameters.
void validate(const ScorerConfig& config);

ScorerPtr make_scorer(const ScorerConfig& config);

}  // namespace mlorder
