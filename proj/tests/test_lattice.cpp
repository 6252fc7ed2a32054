#include "mlorder/lattice.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mlorder/causal.hpp"
#include "mlorder/stats.hpp"
#include "oracles.hpp"

namespace mlorder {
namespace {

Sentence words(std::size_t n, const std::string& id = "s") {
  std::vector<std::string> w;
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    w.push_back("w" + std::to_string(i));
    text += (i ? " " : "") + w.back();
  }
  return Sentence(id, text, w);
}

std::function<double(std::size_t, const std::vector<bool>&)> table_prob(const ScoreTable& t) {
  return [&t](std::size_t k, const std::vector<bool>& filled) {
    Mask f = 0;
    for (std::size_t i = 0; i < filled.size(); ++i) {
      if (filled[i]) f |= Mask{1} << i;
    }
    return *t.masked(f, k);
  };
}

TEST(LatticeCounts, MatchesBinomialSums) {
  for (std::size_t n = 1; n <= 18; ++n) {
    const auto [states, transitions] = oracle::lattice_sizes(n);
    const auto c = lattice_counts(n);
    EXPECT_EQ(c.states, states) << n;
    EXPECT_EQ(c.transitions, transitions) << n;
  }
  EXPECT_EQ(lattice_counts(1), (LatticeCounts{2, 1}));
  EXPECT_EQ(lattice_counts(3), (LatticeCounts{8, 12}));
  EXPECT_EQ(lattice_counts(10), (LatticeCounts{1024, 5120}));
}

TEST(LatticeCounts, Limits) {
  EXPECT_THROW(lattice_counts(0), ContractViolation);
  EXPECT_THROW(lattice_counts(19), SizeLimitError);
  EXPECT_NO_THROW(lattice_counts(19, 20));
  EXPECT_THROW(lattice_counts(5, kMaxLatticeWidth + 1), SizeLimitError);
}

TEST(Viterbi, NeighborFixture) {
  const Sentence s("casa", "la casa azul", {"la", "casa", "azul"});
  const NeighborScorer scorer;
  const auto oracle = oracle::enumerate_orders(3, oracle::neighbor_probability, 1e-12);
  EXPECT_DOUBLE_EQ(oracle.best, 1.0 / 16.0);
  EXPECT_EQ(oracle.maximizers, (std::vector<std::vector<std::size_t>>{
                                   {0, 1, 2}, {1, 0, 2}, {1, 2, 0}, {2, 1, 0}}));

  const auto r = viterbi_optimal_order(s, scorer);
  EXPECT_EQ(r.order.order(), oracle.maximizers.front());
  EXPECT_NEAR(r.logp.value(), std::log(1.0 / 16.0), 1e-12);
  EXPECT_EQ(r.states_visited, 8u);
  EXPECT_EQ(r.scorer_calls, 7u);

  const auto lp = order_logprob(s, OrderPermutation({0, 2, 1}), scorer);
  EXPECT_NEAR(lp.value(), std::log(3.0 / 64.0), 1e-12);
}

TEST(Viterbi, NeighborMatchesEnumerationForLongerSentences) {
  const NeighborScorer scorer;
  for (std::size_t n = 2; n <= 7; ++n) {
    const auto oracle = oracle::enumerate_orders(n, oracle::neighbor_probability, 1e-12);
    const auto r = viterbi_optimal_order(words(n), scorer);
    EXPECT_NEAR(r.logp.value(), std::log(oracle.best), 1e-12) << n;
    EXPECT_EQ(r.order.order(), oracle.maximizers.front()) << n;
  }
}

TEST(Viterbi, UniformScorerGivesIdentityAndPToTheN) {
  for (std::size_t n = 2; n <= 10; ++n) {
    for (double p : {0.5, 0.1, 1.0}) {
      const auto r = viterbi_optimal_order(words(n), UniformScorer(p));
      EXPECT_EQ(r.order, OrderPermutation::identity(n));
      EXPECT_NEAR(r.logp.value(), static_cast<double>(n) * std::log(p), 1e-12);
      EXPECT_EQ(rho_vs_causal(r.order), 1.0);
    }
  }
}

TEST(Viterbi, AgreesWithEnumerationOnRandomTables) {
  for (std::size_t n = 2; n <= 7; ++n) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto table = ScoreTable::random(n, 1000 * n + seed);
      const TableScorer scorer(table);
      const auto oracle = oracle::enumerate_orders(n, table_prob(table));
      const auto r = viterbi_optimal_order(words(n), scorer);
      EXPECT_NEAR(r.logp.value(), std::log(oracle.best), 1e-9) << n << "/" << seed;
      EXPECT_EQ(r.order.order(), oracle.maximizers.front()) << n << "/" << seed;

      const auto bf = brute_force_optimal_order(words(n), scorer);
      EXPECT_EQ(bf.order, r.order);
      EXPECT_EQ(bf.logp, r.logp);
    }
  }
}

TEST(Viterbi, NoRandomOrderBeatsTheOptimum) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {4, 8, 10, 12}) {
    const auto s = words(n);
    const TableScorer scorer(ScoreTable::random(n, n));
    const auto r = viterbi_optimal_order(s, scorer);
    for (int i = 0; i < 100; ++i) {
      const OrderPermutation perm(oracle::random_permutation(n, rng));
      EXPECT_LE(order_logprob(s, perm, scorer).value(), r.logp.value());
    }
  }
}

TEST(Viterbi, ReturnedOrderRescoresToReturnedValue) {
  for (std::size_t n = 2; n <= 12; ++n) {
    const auto s = words(n);
    const TableScorer scorer(ScoreTable::random(n, 77 + n));
    const auto r = viterbi_optimal_order(s, scorer);
    EXPECT_NEAR(order_logprob(s, r.order, scorer).value(), r.logp.value(), 1e-12);
    EXPECT_EQ(r.states_visited, std::uint64_t{1} << n);
    EXPECT_EQ(r.scorer_calls, (std::uint64_t{1} << n) - 1);
  }
}

TEST(Viterbi, ChunkSizeDoesNotChangeTheAnswer) {
  const auto s = words(9);
  const TableScorer scorer(ScoreTable::random(9, 4));
  const auto ref = viterbi_optimal_order(s, scorer);
  for (std::size_t chunk : {1, 3, 64, 100000}) {
    const auto r = viterbi_optimal_order(s, scorer, {.chunk_size = chunk});
    EXPECT_EQ(r.order, ref.order);
    EXPECT_EQ(r.logp, ref.logp);
  }
}

TEST(Viterbi, RiggedTableFavoursLeftToRight) {
  for (std::size_t n = 2; n <= 8; ++n) {
    std::mt19937_64 rng(n);
    std::uniform_real_distribution<double> high(0.1, 1.0);
    ScoreTable table;
    for (std::size_t k = 0; k < n; ++k) table.set_causal(k, high(rng));
    const Mask full = SubsetState::full_mask(n);
    for (Mask f = 0; f < full; ++f) {
      for (std::size_t k = 0; k < n; ++k) {
        if ((f >> k) & 1U) continue;
        const bool prefix = f == SubsetState::full_mask(k);
        table.set_masked(f, k, prefix ? *table.causal(k) : 1e-6);
      }
    }
    const TableScorer scorer(table);
    const auto s = words(n);
    const auto r = viterbi_optimal_order(s, scorer);
    EXPECT_EQ(r.order, OrderPermutation::identity(n));
    EXPECT_NEAR(r.logp.value(), causal_sequence_logprob(s, scorer).value(), 1e-12);
    EXPECT_EQ(rho_vs_causal(r.order), 1.0);
  }
}

TEST(Viterbi, ImpossibleStepsAreAvoided) {
  // Filling position 0 first is impossible; the search must route around it.
  const auto s = words(3);
  ScoreTable table = ScoreTable::random(3, 1);
  table.set_masked(0, 0, 0.0);
  table.set_masked(0, 1, 1e-4);
  table.set_masked(0, 2, 1e-4);
  const auto r = viterbi_optimal_order(s, TableScorer(table));
  EXPECT_NE(r.order[0], 0u);
  EXPECT_FALSE(r.logp.is_impossible());
}

TEST(Viterbi, AllPathsImpossibleStillReturnsAnOrder) {
  const auto s = words(3);
  ScoreTable table;
  for (Mask f = 0; f < 7; ++f) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (!((f >> k) & 1U)) table.set_masked(f, k, 0.0);
    }
  }
  const auto r = viterbi_optimal_order(s, TableScorer(table));
  EXPECT_TRUE(r.logp.is_impossible());
  EXPECT_EQ(r.order, OrderPermutation::identity(3));
}

TEST(Viterbi, SizeLimits) {
  const UniformScorer scorer(0.5);
  EXPECT_THROW(viterbi_optimal_order(words(19), scorer), SizeLimitError);
  EXPECT_THROW(viterbi_optimal_order(words(6), scorer, {.cap = 5}), SizeLimitError);
  EXPECT_THROW(brute_force_optimal_order(words(9), scorer), SizeLimitError);
}

TEST(Viterbi, MissingTableEntryNamesTheState) {
  const auto s = words(3, "broken");
  ScoreTable table = ScoreTable::random(3, 2);
  ScoreTable partial;
  for (Mask f = 0; f < 7; ++f) {
    for (std::size_t k = 0; k < 3; ++k) {
      if ((f >> k) & 1U) continue;
      if (f == 0b011) continue;
      partial.set_masked(f, k, *table.masked(f, k));
    }
  }
  try {
    viterbi_optimal_order(s, TableScorer(partial), {.chunk_size = 1});
    FAIL() << "expected a scorer error";
  } catch (const ScorerError& e) {
    EXPECT_EQ(e.kind(), ScorerError::Kind::missing_entry);
    ASSERT_TRUE(e.state().has_value());
    EXPECT_NE(e.state()->find("broken"), std::string::npos);
    EXPECT_NE(e.state()->find("{0,1}/3"), std::string::npos);
  }
}

TEST(OrderLogprob, RejectsMismatchedOrder) {
  const auto s = words(3);
  EXPECT_THROW(order_logprob(s, OrderPermutation({0, 1}), NeighborScorer()), InvalidPermutation);
}

}  // namespace
}  // namespace mlorder
