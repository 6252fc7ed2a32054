#pragma once

#include <cstdint>

#include "mlorder/core.hpp"
#include "mlorder/scorer.hpp"

namespace mlorder {

inline constexpr std::size_t kDefaultWordCap = 18;
inline constexpr std::size_t kBruteForceMaxWords = 8;

struct LatticeCounts {
  std::uint64_t states = 0;       // sum_i C(n, i) = 2^n
  std::uint64_t transitions = 0;  // sum_i C(n, i) * i = n * 2^(n-1)

  friend bool operator==(const LatticeCounts&, const LatticeCounts&) = default;
};

/// Size of the masked-subset lattice for an n-word sentence.
/// Throws SizeLimitError when n exceeds `cap`, ContractViolation when n == 0.
LatticeCounts lattice_counts(std::size_t n, std::size_t cap = kDefaultWordCap);

/// One transition of the lattice: fill `position` starting from `from`.
struct Transition {
  SubsetState from;
  std::size_t position;
  LogProb cost;

  SubsetState to() const { return from.with(position); }
};

struct ViterbiResult {
  OrderPermutation order;
  LogProb logp;
  std::uint64_t states_visited = 0;
  std::uint64_t scorer_calls = 0;
};

struct SearchOptions {
  std::size_t cap = kDefaultWordCap;
  /// States handed to Scorer::score_states at once.
  std::size_t chunk_size = 1024;
};

/// Exact maximum-likelihood generation order.
///
/// Dynamic programming over subsets of filled positions, traversed from the
/// all-masked state to the full sentence in increasing popcount order:
///
///   best(empty) = 0
///   best(F)     = max_{k in F} best(F \ {k}) + ln P(word k | F \ {k} filled)
///
/// Every state with at least one masked slot is scored exactly once, with all
/// of its masked slots as targets. Among equally likely orders the
/// lexicographically smallest one is returned: each state keeps the smallest
/// optimal prefix, which is sound because two prefixes of the same set share
/// every possible continuation. Path sums accumulate left to right, the same
/// way order_logprob does, so re-scoring the returned order reproduces `logp`
/// bit for bit.
ViterbiResult viterbi_optimal_order(const Sentence& sentence, const Scorer& scorer,
                                    const SearchOptions& options = {});

/// Enumerates all N! orders in lexicographic order and keeps the first
/// maximizer. Independent oracle for viterbi_optimal_order; N <= 8.
ViterbiResult brute_force_optimal_order(const Sentence& sentence, const Scorer& scorer);

/// ln P(sentence | order): sum over steps j of
/// ln P(word order[j] | positions order[0..j-1] filled, everything else masked).
LogProb order_logprob(const Sentence& sentence, const OrderPermutation& order, const Scorer& scorer,
                      std::size_t cap = kDefaultWordCap);

}  // namespace mlorder
