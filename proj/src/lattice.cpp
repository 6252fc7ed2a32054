#include "mlorder/lattice.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <limits>
#include <numeric>

namespace mlorder {

namespace {

void check_cap(std::size_t n, std::size_t cap, const char* what) {
  if (cap > kMaxLatticeWidth) {
    throw SizeLimitError("word cap " + std::to_string(cap) + " exceeds the supported maximum " +
                         std::to_string(kMaxLatticeWidth));
  }
  if (n > cap) {
    throw SizeLimitError(std::string(what) + ": " + std::to_string(n) +
                         " words exceeds the cap of " + std::to_string(cap));
  }
}

constexpr std::uint8_t kNoLast = std::numeric_limits<std::uint8_t>::max();

// Next larger integer with the same popcount.
Mask next_same_popcount(Mask v) {
  const Mask t = v | (v - 1);
  return (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
}

class SubsetDp {
 public:
  explicit SubsetDp(std::size_t n)
      : n_(n),
        best_(std::size_t{1} << n, -std::numeric_limits<double>::infinity()),
        last_(std::size_t{1} << n, kNoLast) {
    best_[0] = 0.0;
  }

  double best(Mask s) const { return best_[s]; }

  void relax(Mask from, std::size_t k, LogProb cost) {
    const Mask to = from | (Mask{1} << k);
    const double candidate = best_[from] + cost.value();
    const bool take = last_[to] == kNoLast || candidate > best_[to] ||
                      (candidate == best_[to] && prefix_less(from, k, to));
    if (take) {
      best_[to] = candidate;
      last_[to] = static_cast<std::uint8_t>(k);
    }
  }

  std::vector<std::size_t> order() const {
    std::vector<std::size_t> order(n_);
    write_prefix(SubsetState::full_mask(n_), order.data());
    return order;
  }

 private:
  // Fill `out` with the stored prefix of `s` (popcount(s) entries).
  void write_prefix(Mask s, std::size_t* out) const {
    for (auto j = static_cast<std::size_t>(std::popcount(s)); j > 0; --j) {
      const auto k = last_[s];
      out[j - 1] = k;
      s &= ~(Mask{1} << k);
    }
  }

  // Is prefix(from) + [k] lexicographically smaller than the prefix stored for `to`?
  bool prefix_less(Mask from, std::size_t k, Mask to) const {
    std::array<std::size_t, kMaxLatticeWidth> a{};
    std::array<std::size_t, kMaxLatticeWidth> b{};
    const auto len = static_cast<std::size_t>(std::popcount(to));
    write_prefix(from, a.data());
    a[len - 1] = k;
    write_prefix(to, b.data());
    return std::lexicographical_compare(a.begin(), a.begin() + len, b.begin(), b.begin() + len);
  }

  std::size_t n_;
  std::vector<double> best_;
  std::vector<std::uint8_t> last_;
};

}  // namespace

LatticeCounts lattice_counts(std::size_t n, std::size_t cap) {
  if (n == 0) throw ContractViolation("lattice needs at least one word");
  check_cap(n, cap, "lattice_counts");
  const std::uint64_t states = std::uint64_t{1} << n;
  return {states, n * (states / 2)};
}

ViterbiResult viterbi_optimal_order(const Sentence& sentence, const Scorer& scorer,
                                    const SearchOptions& options) {
  const auto n = sentence.size();
  check_cap(n, options.cap, "viterbi_optimal_order");
  const auto chunk = std::max<std::size_t>(1, options.chunk_size);

  SubsetDp dp(n);
  const Mask full = SubsetState::full_mask(n);
  std::uint64_t calls = 0;

  std::vector<Mask> level;
  std::vector<MaskedScoreRequest> batch;
  for (std::size_t filled_count = 0; filled_count < n; ++filled_count) {
    // Every state with this popcount; predecessors are already final.
    level.clear();
    for (Mask s = SubsetState::full_mask(filled_count); s <= full; s = next_same_popcount(s)) {
      level.push_back(s);
      if (s == 0) break;
    }

    for (std::size_t start = 0; start < level.size(); start += chunk) {
      const auto end = std::min(level.size(), start + chunk);
      batch.clear();
      for (auto i = start; i < end; ++i) batch.push_back(full_request(sentence, {n, level[i]}));

      std::vector<PositionScores> scores;
      try {
        scores = scorer.score_states(batch);
      } catch (const ScorerError& e) {
        if (e.state() || batch.size() != 1) throw;
        throw e.with_state(sentence.id(), batch.front().state);
      }
      if (scores.size() != batch.size()) {
        throw ScorerError(ScorerError::Kind::protocol, "scorer returned " +
                                                           std::to_string(scores.size()) +
                                                           " results for " +
                                                           std::to_string(batch.size()) + " states");
      }
      calls += batch.size();

      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& req = batch[i];
        for (auto k : req.targets) {
          auto it = scores[i].find(k);
          if (it == scores[i].end()) {
            throw ScorerError(ScorerError::Kind::protocol,
                              "scorer omitted target " + std::to_string(k))
                .with_state(sentence.id(), req.state);
          }
          dp.relax(req.state.filled(), k, it->second);
        }
      }
    }
  }

  auto order = dp.order();
  const double logp = dp.best(full);
  return ViterbiResult{OrderPermutation(std::move(order)),
                       std::isinf(logp) ? LogProb::impossible() : LogProb(logp),
                       std::uint64_t{1} << n, calls};
}

LogProb order_logprob(const Sentence& sentence, const OrderPermutation& order, const Scorer& scorer,
                      std::size_t cap) {
  const auto n = sentence.size();
  check_cap(n, cap, "order_logprob");
  if (order.size() != n) {
    throw InvalidPermutation("order has " + std::to_string(order.size()) + " positions for " +
                             std::to_string(n) + " words");
  }
  LogProb total;
  SubsetState state = SubsetState::empty(n);
  for (auto k : order.order()) {
    MaskedScoreRequest req{sentence, state, {k}};
    PositionScores scores;
    try {
      scores = scorer.score_state(req);
    } catch (const ScorerError& e) {
      if (e.state()) throw;
      throw e.with_state(sentence.id(), state);
    }
    auto it = scores.find(k);
    if (it == scores.end()) {
      throw ScorerError(ScorerError::Kind::protocol, "scorer omitted target " + std::to_string(k))
          .with_state(sentence.id(), state);
    }
    total += it->second;
    state = state.with(k);
  }
  return total;
}

ViterbiResult brute_force_optimal_order(const Sentence& sentence, const Scorer& scorer) {
  const auto n = sentence.size();
  check_cap(n, kBruteForceMaxWords, "brute_force_optimal_order");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::optional<OrderPermutation> best_order;
  LogProb best_logp = LogProb::impossible();
  std::uint64_t calls = 0;
  do {
    OrderPermutation candidate(perm);
    const auto lp = order_logprob(sentence, candidate, scorer, kBruteForceMaxWords);
    calls += n;
    if (!best_order || lp > best_logp) {
      best_order = std::move(candidate);
      best_logp = lp;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  return ViterbiResult{std::move(*best_order), best_logp, std::uint64_t{1} << n, calls};
}

}  // namespace mlorder
