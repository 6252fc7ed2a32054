#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlorder/core.hpp"
#include "mlorder/lattice.hpp"
#include "mlorder/scorer.hpp"
#include "mlorder/stats.hpp"

namespace mlorder {

/// Optimal order, both log-probabilities, rho and the dB ratio for one sentence.
AnalysisRecord analyze_sentence(const Sentence& sentence, const Scorer& masked_scorer,
                                const Scorer& causal_scorer, std::size_t cap = kDefaultWordCap);

struct SentenceFailure {
  std::string id;
  std::string error;
};

struct AnalyzeOptions {
  std::size_t workers = 1;
  std::size_t cap = kDefaultWordCap;
  std::size_t bins = kDefaultHistogramBins;
  std::optional<std::pair<double, double>> histogram_range;
};

struct AnalysisOutcome {
  std::vector<AnalysisRecord> records;  // sorted by id
  std::vector<SentenceFailure> failures;  // sorted by id
};

/// Runs analyze_sentence over every sentence on a bounded worker pool. A
/// failing sentence is recorded and the run continues. Output order does not
/// depend on the worker count.
AnalysisOutcome analyze_corpus(std::span<const Sentence> sentences, const Scorer& masked_scorer,
                               const Scorer& causal_scorer, const AnalyzeOptions& options);

/// One JSON object per record with a fixed key set.
nlohmann::ordered_json record_to_json(const AnalysisRecord& record);

struct ReportPaths {
  std::filesystem::path records;         // records.jsonl
  std::filesystem::path failures;        // failures.jsonl
  std::filesystem::path aggregates;      // aggregates_<type>.csv, one per type present
  std::filesystem::path ratios;          // ratio_db.csv
  std::filesystem::path histograms;      // rho_histograms.csv
};

/// Writes the per-sentence records, per-structure aggregate tables,
/// ratio summaries and rho histogram data under `out_dir`.
ReportPaths write_reports(const AnalysisOutcome& outcome, const AnalyzeOptions& options,
                          const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------

struct SelfcheckCase {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool agree = false;
  std::string detail;
};

struct SelfcheckReport {
  std::vector<SelfcheckCase> cases;
  bool all_agree() const;
};

/// Seed for trial `trial` of width `n` under base seed `base`.
std::uint64_t selfcheck_seed(std::uint64_t base, std::size_t n, std::size_t trial);

/// Viterbi vs brute force on random tables for N = 2..max_n.
SelfcheckReport run_selfcheck(std::size_t max_n, std::size_t trials, std::uint64_t base_seed,
                              const std::function<void(const SelfcheckCase&)>& on_case = {});

}  // namespace mlorder
