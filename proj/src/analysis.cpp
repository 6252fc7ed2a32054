#include "mlorder/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "mlorder/causal.hpp"

namespace mlorder {

AnalysisRecord analyze_sentence(const Sentence& sentence, const Scorer& masked_scorer,
                                const Scorer& causal_scorer, std::size_t cap) {
  auto viterbi = viterbi_optimal_order(sentence, masked_scorer, SearchOptions{.cap = cap});
  const auto logp_causal = causal_sequence_logprob(sentence, causal_scorer);

  AnalysisRecord r;
  r.id = sentence.id();
  r.triplet_id = sentence.labels().triplet_id;
  r.text = sentence.text();
  r.sentence_type = sentence.labels().sentence_type;
  r.structure = sentence.labels().structure;
  r.words = sentence.words();
  r.n_words = sentence.size();
  r.rho = rho_vs_causal(viterbi.order);
  r.ratio_db = ratio_db(viterbi.logp, logp_causal);
  r.optimal_order = std::move(viterbi.order);
  r.logp_optimal_noncausal = viterbi.logp;
  r.logp_causal = logp_causal;
  return r;
}

AnalysisOutcome analyze_corpus(std::span<const Sentence> sentences, const Scorer& masked_scorer,
                               const Scorer& causal_scorer, const AnalyzeOptions& options) {
  const auto count = sentences.size();
  std::vector<std::optional<AnalysisRecord>> records(count);
  std::vector<std::optional<std::string>> errors(count);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (auto i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        records[i] = analyze_sentence(sentences[i], masked_scorer, causal_scorer, options.cap);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };

  const auto workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  AnalysisOutcome out;
  for (std::size_t i = 0; i < count; ++i) {
    if (records[i]) out.records.push_back(std::move(*records[i]));
    if (errors[i]) out.failures.push_back({sentences[i].id(), std::move(*errors[i])});
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(out.failures.begin(), out.failures.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

nlohmann::ordered_json record_to_json(const AnalysisRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["triplet_id"] = r.triplet_id;
  j["sentence_type"] = r.sentence_type ? nlohmann::ordered_json(to_string(*r.sentence_type)) : nullptr;
  j["structure"] = r.structure ? nlohmann::ordered_json(to_string(*r.structure)) : nullptr;
  j["text"] = r.text;
  j["n_words"] = r.n_words;
  j["optimal_order"] = r.optimal_order.order();
  std::vector<std::string> optimal_words;
  for (auto p : r.optimal_order.order()) optimal_words.push_back(r.words.at(p));
  j["optimal_words"] = optimal_words;
  j["logp_optimal_noncausal"] = r.logp_optimal_noncausal.value();
  j["logp_causal"] = r.logp_causal.value();
  j["log10p_optimal_noncausal"] = r.logp_optimal_noncausal.log10();
  j["log10p_causal"] = r.logp_causal.log10();
  j["rho"] = r.rho;
  j["ratio_db"] = r.ratio_db;
  return j;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

void write_histogram_rows(std::ostream& out, std::string_view type, std::string_view structure,
                          std::span<const double> values, const AnalyzeOptions& options) {
  if (values.empty()) return;
  const auto h = histogram(values, options.bins, options.histogram_range);
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out << type << ',' << structure << ',' << b << ',' << num(h.edges[b]) << ','
        << num(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
  }
}

}  // namespace

ReportPaths write_reports(const AnalysisOutcome& outcome, const AnalyzeOptions& options,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportPaths paths{out_dir / "records.jsonl", out_dir / "failures.jsonl", out_dir,
                    out_dir / "ratio_db.csv", out_dir / "rho_histograms.csv"};

  {
    auto out = open_out(paths.records);
    for (const auto& r : outcome.records) out << record_to_json(r).dump() << '\n';
  }
  {
    auto out = open_out(paths.failures);
    for (const auto& f : outcome.failures) {
      out << nlohmann::ordered_json{{"id", f.id}, {"error", f.error}}.dump() << '\n';
    }
  }

  std::vector<StructureAggregate> aggregates;
  if (!outcome.records.empty()) aggregates = aggregate_by_structure(outcome.records);

  for (auto type : kAllSentenceTypes) {
    const auto path = out_dir / ("aggregates_" + std::string(to_string(type)) + ".csv");
    auto out = open_out(path);
    out << "structure,count,mean_prob_optimal_noncausal,mean_prob_causal,mean_rho,"
           "geomean_prob_optimal_noncausal,geomean_prob_causal\n";
    for (const auto& a : aggregates) {
      if (a.sentence_type != type) continue;
      out << to_string(a.structure) << ',' << a.count << ',' << num(a.mean_prob_optimal_noncausal)
          << ',' << num(a.mean_prob_causal) << ',' << num(a.mean_rho) << ','
          << num(a.geomean_prob_optimal_noncausal) << ',' << num(a.geomean_prob_causal) << '\n';
    }
  }

  {
    auto out = open_out(paths.ratios);
    out << "sentence_type,structure,count,ratio_db_of_means,mean_ratio_db,min_ratio_db,max_ratio_db\n";
    for (const auto& a : aggregates) {
      out << to_string(a.sentence_type) << ',' << to_string(a.structure) << ',' << a.count << ','
          << num(a.ratio_db_of_means) << ',' << num(a.mean_ratio_db) << ',' << num(a.min_ratio_db)
          << ',' << num(a.max_ratio_db) << '\n';
    }
  }

  {
    auto out = open_out(paths.histograms);
    out << "sentence_type,structure,bin,lo,hi,count\n";
    std::vector<double> all;
    std::map<SentenceType, std::vector<double>> by_type;
    std::map<std::pair<SentenceType, Structure>, std::vector<double>> by_structure;
    for (const auto& r : outcome.records) {
      all.push_back(r.rho);
      if (r.sentence_type) {
        by_type[*r.sentence_type].push_back(r.rho);
        if (r.structure) by_structure[{*r.sentence_type, *r.structure}].push_back(r.rho);
      }
    }
    write_histogram_rows(out, "all", "all", all, options);
    for (auto type : kAllSentenceTypes) {
      if (auto it = by_type.find(type); it != by_type.end()) {
        write_histogram_rows(out, to_string(type), "all", it->second, options);
      }
      for (auto st : kAllStructures) {
        if (auto it = by_structure.find({type, st}); it != by_structure.end()) {
          write_histogram_rows(out, to_string(type), to_string(st), it->second, options);
        }
      }
    }
  }
  return paths;
}

// ---------------------------------------------------------------------------

bool SelfcheckReport::all_agree() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.agree; });
}

std::uint64_t selfcheck_seed(std::uint64_t base, std::size_t n, std::size_t trial) {
  // splitmix64 finalizer over a packed key.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (1 + (static_cast<std::uint64_t>(n) << 32) + trial);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SelfcheckReport run_selfcheck(std::size_t max_n, std::size_t trials, std::uint64_t base_seed,
                              const std::function<void(const SelfcheckCase&)>& on_case) {
  if (max_n < 2 || max_n > kBruteForceMaxWords) {
    throw ContractViolation("selfcheck max n must be in [2, " + std::to_string(kBruteForceMaxWords) + "]");
  }
  if (trials < 1) throw ContractViolation("selfcheck needs at least one trial");

  SelfcheckReport report;
  for (std::size_t n = 2; n <= max_n; ++n) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;

    for (std::size_t t = 0; t < trials; ++t) {
      SelfcheckCase c{n, selfcheck_seed(base_seed, n, t), false, {}};
      const Sentence sentence("selfcheck-n" + std::to_string(n) + "-t" + std::to_string(t), text, words);
      const TableScorer scorer(ScoreTable::random(n, c.seed));
      const auto dp = viterbi_optimal_order(sentence, scorer);
      const auto bf = brute_force_optimal_order(sentence, scorer);
      const double diff = std::abs(dp.logp.value() - bf.logp.value());
      c.agree = dp.order == bf.order && diff <= 1e-9;
      if (!c.agree) {
        auto fmt = [](const OrderPermutation& o) {
          std::string s = "[";
          for (auto p : o.order()) s += (s.size() > 1 ? "," : "") + std::to_string(p);
          return s + "]";
        };
        c.detail = "viterbi " + fmt(dp.order) + " " + num(dp.logp.value()) + " vs brute force " +
                   fmt(bf.order) + " " + num(bf.logp.value());
      }
      if (on_case) on_case(c);
      report.cases.push_back(std::move(c));
    }
  }
  return report;
}

}  // namespace mlorder
