#include "mlorder/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace mlorder {

namespace {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Natural log of the arithmetic mean of exp(v) over `values`.
double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw EmptyInputError("mean of an empty set");
  const double max = *std::max_element(values.begin(), values.end());
  if (std::isinf(max)) return max;
  CompensatedSum sum;
  for (double v : values) sum.add(std::exp(v - max));
  return max + std::log(sum.value() / static_cast<double>(values.size()));
}

double mean(std::span<const double> values) {
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  return sum.value() / static_cast<double>(values.size());
}

void check_rank_permutation(std::span<const std::size_t> r, const char* name) {
  try {
    order_to_ranks(r);
  } catch (const InvalidPermutation& e) {
    throw ContractViolation(std::string(name) + " is not a permutation: " + e.what());
  }
}

}  // namespace

double spearman_rho(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) {
    throw ContractViolation("rank vectors differ in length (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw ContractViolation("spearman_rho needs at least 2 observations");
  check_rank_permutation(a, "first rank vector");
  check_rank_permutation(b, "second rank vector");

  std::uint64_t sum_d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto d = static_cast<std::int64_t>(a[i]) - static_cast<std::int64_t>(b[i]);
    sum_d2 += static_cast<std::uint64_t>(d * d);
  }
  const auto n = static_cast<double>(a.size());
  return 1.0 - 6.0 * static_cast<double>(sum_d2) / (n * (n * n - 1.0));
}

double rho_vs_causal(const OrderPermutation& order) {
  const auto identity = OrderPermutation::identity(order.size());
  return spearman_rho(order.ranks(), identity.ranks());
}

double ratio_db(LogProb logp_optimal, LogProb logp_causal) {
  if (logp_optimal.is_impossible() || logp_causal.is_impossible()) {
    throw UndefinedRatioError("probability ratio is undefined for a zero probability");
  }
  return (10.0 / std::numbers::ln10) * (logp_optimal.value() - logp_causal.value());
}

double mean_linear_probability(std::span<const LogProb> logps) {
  std::vector<double> values;
  values.reserve(logps.size());
  for (auto lp : logps) values.push_back(lp.value());
  return std::exp(log_mean_exp(values));
}

std::vector<StructureAggregate> aggregate_by_structure(std::span<const AnalysisRecord> records) {
  if (records.empty()) throw EmptyInputError("no records to aggregate");

  struct Group {
    std::vector<double> logp_optimal, logp_causal, rho, ratio;
  };
  std::map<std::pair<SentenceType, Structure>, Group> groups;
  for (const auto& r : records) {
    if (!r.sentence_type || !r.structure) continue;
    auto& g = groups[{*r.sentence_type, *r.structure}];
    g.logp_optimal.push_back(r.logp_optimal_noncausal.value());
    g.logp_causal.push_back(r.logp_causal.value());
    g.rho.push_back(r.rho);
    g.ratio.push_back(r.ratio_db);
  }

  std::vector<StructureAggregate> out;
  for (const auto& [key, g] : groups) {
    StructureAggregate a{.structure = key.second, .sentence_type = key.first};
    a.count = g.rho.size();
    const double log_mean_opt = log_mean_exp(g.logp_optimal);
    const double log_mean_causal = log_mean_exp(g.logp_causal);
    a.mean_prob_optimal_noncausal = std::exp(log_mean_opt);
    a.mean_prob_causal = std::exp(log_mean_causal);
    a.mean_rho = mean(g.rho);
    a.geomean_prob_optimal_noncausal = std::exp(mean(g.logp_optimal));
    a.geomean_prob_causal = std::exp(mean(g.logp_causal));
    a.mean_ratio_db = mean(g.ratio);
    a.min_ratio_db = *std::min_element(g.ratio.begin(), g.ratio.end());
    a.max_ratio_db = *std::max_element(g.ratio.begin(), g.ratio.end());
    a.ratio_db_of_means = (10.0 / std::numbers::ln10) * (log_mean_opt - log_mean_causal);
    out.push_back(a);
  }
  return out;
}

Histogram histogram(std::span<const double> values, std::size_t bins,
                    std::optional<std::pair<double, double>> range) {
  if (values.empty()) throw EmptyInputError("histogram of no values");
  if (bins < 1) throw ContractViolation("histogram needs at least one bin");
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractViolation("histogram value is not finite");
  }

  double lo = 0.0;
  double hi = 0.0;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(lo < hi)) throw ContractViolation("histogram range must satisfy lo < hi");
  } else {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }

  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  h.edges.back() = hi;
  h.counts.assign(bins, 0);

  for (double v : values) {
    if (v < lo || v > hi) {
      throw ContractViolation("value " + std::to_string(v) + " outside histogram range");
    }
    auto idx = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    idx = std::min(idx, bins - 1);
    // Settle rounding at bin edges against the stored edges.
    while (idx > 0 && v < h.edges[idx]) --idx;
    while (idx + 1 < bins && v >= h.edges[idx + 1]) ++idx;
    ++h.counts[idx];
  }
  h.total = values.size();
  return h;
}

}  // namespace mlorder
