#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mlorder/core.hpp"

namespace mlorder {

/// rho = 1 - 6 * sum(d_i^2) / (N (N^2 - 1)) for two rank permutations of
/// 0..N-1. No tie correction: permutations have no ties.
double spearman_rho(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Spearman's rho between an order's ranks and the left-to-right ranks.
double rho_vs_causal(const OrderPermutation& order);

/// 10 * log10(P_optimal / P_causal), computed from log values.
/// Throws UndefinedRatioError if either argument is -inf.
double ratio_db(LogProb logp_optimal, LogProb logp_causal);

struct StructureAggregate {
  Structure structure;
  SentenceType sentence_type;
  std::size_t count = 0;
  // Arithmetic means of linear probabilities.
  double mean_prob_optimal_noncausal = 0.0;
  double mean_prob_causal = 0.0;
  double mean_rho = 0.0;
  // Supplementary: exp(mean log-probability).
  double geomean_prob_optimal_noncausal = 0.0;
  double geomean_prob_causal = 0.0;
  // Per-sentence ratio statistics and the ratio of the two linear means.
  double mean_ratio_db = 0.0;
  double min_ratio_db = 0.0;
  double max_ratio_db = 0.0;
  double ratio_db_of_means = 0.0;
};

/// Mean of exp(logp) over the inputs, by compensated summation of
/// exp(logp - max) rescaled by exp(max) so tiny probabilities keep their
/// relative precision.
double mean_linear_probability(std::span<const LogProb> logps);

/// One aggregate per (sentence type, structure) present, ordered by type
/// then structure. Records without labels are skipped.
/// Throws EmptyInputError on empty input.
std::vector<StructureAggregate> aggregate_by_structure(std::span<const AnalysisRecord> records);

/// Equal-width bins over [lo, hi); the last bin is closed.
struct Histogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::size_t> counts;
  std::size_t total = 0;
};

inline constexpr std::size_t kDefaultHistogramBins = 20;

/// Without a range, uses [min, max] of the values, widened by 0.5 on each
/// side when they are all equal. Values outside an explicit range are a
/// ContractViolation.
Histogram histogram(std::span<const double> values, std::size_t bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);

}  // namespace mlorder
