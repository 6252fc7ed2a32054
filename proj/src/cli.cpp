#include "mlorder/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlorder/analysis.hpp"
#include "mlorder/corpus.hpp"
#include "mlorder/lattice.hpp"
#include "mlorder/scorer.hpp"
#include "mlorder/stats.hpp"

namespace mlorder::cli {

namespace {

constexpr const char* kMaskedEndpointEnv = "MLORDER_MASKED_ENDPOINT";
constexpr const char* kCausalEndpointEnv = "MLORDER_CAUSAL_ENDPOINT";

struct ScorerFlags {
  std::string spec;
  std::size_t batch_size = 32;
  std::size_t max_concurrent = 4;
  long timeout_ms = 30000;
};

void add_transport_flags(CLI::App* app, ScorerFlags& flags) {
  app->add_option("--batch-size", flags.batch_size, "States sent to a remote scorer together")
      ->check(CLI::PositiveNumber);
  app->add_option("--max-concurrent", flags.max_concurrent, "In-flight remote requests")
      ->check(CLI::PositiveNumber);
  app->add_option("--timeout-ms", flags.timeout_ms, "Remote request timeout")
      ->check(CLI::PositiveNumber);
}

ScorerPtr build_scorer(const ScorerFlags& flags, const char* env) {
  std::string spec = flags.spec;
  if (spec.empty()) {
    const char* endpoint = std::getenv(env);
    if (endpoint == nullptr || *endpoint == '\0') {
      throw ConfigError(std::string("no scorer given and ") + env + " is not set");
    }
    spec = "remote";
  }
  auto config = parse_scorer_config(spec, env);
  config.batch_size = flags.batch_size;
  config.max_concurrent_requests = flags.max_concurrent;
  config.timeout = std::chrono::milliseconds(flags.timeout_ms);
  return make_scorer(config);
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const SizeLimitError& e) {
    err << "error: " << e.what() << '\n';
    return kSizeLimit;
  } catch (const ScorerError& e) {
    err << "scorer error: " << e.what() << '\n';
    return kScorer;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const TooShortError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

// ---------------------------------------------------------------------------

struct OrderArgs {
  std::string text;
  std::string id;
  std::string corpus;
  ScorerFlags scorer;
  std::size_t cap = kDefaultWordCap;
  std::string format = "text";
};

int cmd_order(const OrderArgs& a, std::ostream& out) {
  std::optional<Sentence> sentence;
  if (!a.text.empty()) {
    sentence.emplace("text", a.text, segment_words(a.text));
  } else {
    auto corpus = load_corpus(a.corpus, false);
    for (auto& s : corpus.records) {
      if (s.id() == a.id) sentence.emplace(std::move(s));
    }
    if (!sentence) throw ConfigError("no sentence with id '" + a.id + "' in " + a.corpus);
  }

  auto scorer = build_scorer(a.scorer, kMaskedEndpointEnv);
  const auto result = viterbi_optimal_order(*sentence, *scorer, SearchOptions{.cap = a.cap});
  const double rho = rho_vs_causal(result.order);
  const auto& words = sentence->words();

  if (a.format == "json") {
    nlohmann::ordered_json j;
    j["id"] = sentence->id();
    j["text"] = sentence->text();
    j["words"] = words;
    j["order"] = result.order.order();
    std::vector<std::string> order_words;
    for (auto p : result.order.order()) order_words.push_back(words[p]);
    j["order_words"] = order_words;
    j["logp"] = result.logp.value();
    j["log10p"] = result.logp.log10();
    j["probability"] = result.logp.probability();
    j["rho_vs_causal"] = rho;
    j["states_visited"] = result.states_visited;
    j["scorer_calls"] = result.scorer_calls;
    out << j.dump() << '\n';
    return kOk;
  }

  out << "sentence: " << sentence->text() << '\n';
  out << "words: " << words.size() << '\n';
  out << "optimal generation order:\n";
  for (std::size_t step = 0; step < result.order.size(); ++step) {
    const auto p = result.order[step];
    out << "  " << step + 1 << ". " << words[p] << "  (position " << p << ")\n";
  }
  out << "order indices: " << join_indices(result.order.order()) << '\n';
  out << std::setprecision(17);
  out << "log-prob: " << result.logp.value() << '\n';
  out << "probability: " << result.logp.probability() << '\n';
  out << "rho vs causal: " << rho << '\n';
  out << "states visited: " << result.states_visited << '\n';
  out << "scorer calls: " << result.scorer_calls << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string corpus;
  ScorerFlags masked;
  ScorerFlags causal;
  std::size_t bins = kDefaultHistogramBins;
  std::size_t workers = 1;
  std::size_t cap = kDefaultWordCap;
  std::string out_dir = "mlorder-report";
  std::vector<double> hist_range;
  bool lenient = false;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(a.corpus, !a.lenient);
  for (const auto& w : corpus.warnings) err << "warning: " << w << '\n';

  ScorerFlags causal_flags = a.causal;
  causal_flags.batch_size = a.masked.batch_size;
  causal_flags.max_concurrent = a.masked.max_concurrent;
  causal_flags.timeout_ms = a.masked.timeout_ms;
  auto masked = build_scorer(a.masked, kMaskedEndpointEnv);
  auto causal = build_scorer(causal_flags, kCausalEndpointEnv);

  AnalyzeOptions options;
  options.workers = a.workers;
  options.cap = a.cap;
  options.bins = a.bins;
  if (!a.hist_range.empty()) options.histogram_range = std::pair{a.hist_range[0], a.hist_range[1]};

  const auto outcome = analyze_corpus(corpus.records, *masked, *causal, options);
  const auto paths = write_reports(outcome, options, a.out_dir);

  nlohmann::ordered_json summary;
  summary["corpus"] = a.corpus;
  summary["sentences"] = corpus.records.size();
  summary["records"] = outcome.records.size();
  std::vector<std::string> failed;
  for (const auto& f : outcome.failures) failed.push_back(f.id);
  summary["failed_ids"] = failed;
  {
    std::ofstream s(std::filesystem::path(a.out_dir) / "summary.json", std::ios::trunc);
    s << summary.dump(2) << '\n';
  }

  out << outcome.records.size() << " records written to " << paths.records.string() << '\n';
  std::size_t declarative = 0;
  if (!outcome.records.empty()) {
    for (const auto& agg : aggregate_by_structure(outcome.records)) {
      declarative += agg.sentence_type == SentenceType::declarative;
    }
  }
  out << declarative << " declarative aggregates\n";
  if (!outcome.failures.empty()) {
    err << outcome.failures.size() << " sentence(s) failed:\n";
    for (const auto& f : outcome.failures) err << "  " << f.id << ": " << f.error << '\n';
    return kPartialFailure;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  // Lenient first so the counts are printed even when strict validation fails.
  CorpusFile lenient;
  try {
    lenient = load_corpus(path, false);
  } catch (...) {
    return report_exception(err);
  }
  out << lenient.records.size() << " records\n";
  for (auto type : kAllSentenceTypes) {
    auto it = lenient.counts.by_type.find(type);
    out << "  " << to_string(type) << ": " << (it == lenient.counts.by_type.end() ? 0 : it->second);
    for (auto st : kAllStructures) {
      auto jt = lenient.counts.by_type_structure.find({type, st});
      out << ' ' << to_string(st) << '='
          << (jt == lenient.counts.by_type_structure.end() ? 0 : jt->second);
    }
    out << '\n';
  }
  for (const auto& w : lenient.warnings) err << "warning: " << w << '\n';

  try {
    const auto strict = load_corpus(path, true);
    out << strict.records.size() << " records, " << strict.counts.complete_triplets
        << " triplets complete\n";
    return kOk;
  } catch (...) {
    return report_exception(err);
  }
}

// ---------------------------------------------------------------------------

int cmd_selfcheck(std::size_t max_n, std::size_t trials, std::uint64_t seed, std::ostream& out,
                  std::ostream& err) {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_n;
  std::vector<SelfcheckCase> failures;
  const auto report = run_selfcheck(max_n, trials, seed, [&](const SelfcheckCase& c) {
    auto& [agree, total] = per_n[c.n];
    ++total;
    if (c.agree) ++agree;
  });
  for (const auto& [n, counts] : per_n) {
    out << "N=" << n << ": " << counts.first << "/" << counts.second << " agree\n";
  }
  for (const auto& c : report.cases) {
    if (!c.agree) {
      err << "mismatch: N=" << c.n << " seed=" << c.seed << " sentence=selfcheck-n" << c.n << ": "
          << c.detail << '\n';
    }
  }
  if (!report.all_agree()) return kMismatch;
  out << "all " << report.cases.size() << " cases agree\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_make_tables(const std::string& corpus_path, const std::string& out_dir, std::uint64_t seed,
                    std::ostream& out) {
  const auto corpus = load_corpus(corpus_path, false);
  std::filesystem::create_directories(out_dir);
  for (const auto& s : corpus.records) {
    const auto table = ScoreTable::random(s.size(), seed ^ fnv1a(s.id()));
    std::ofstream f(std::filesystem::path(out_dir) / (s.id() + ".tbl"), std::ios::trunc);
    if (!f) throw Error("cannot write table for '" + s.id() + "'");
    f << "# " << s.text() << '\n';
    table.write(f);
  }
  out << corpus.records.size() << " tables written to " << out_dir << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Maximum-likelihood word generation order under masked language models", "mlorder"};
  app.require_subcommand(1);

  OrderArgs order_args;
  auto* order = app.add_subcommand("order", "Optimal generation order of one sentence");
  auto* text_opt = order->add_option("--text", order_args.text, "Sentence text");
  auto* id_opt = order->add_option("--id", order_args.id, "Sentence id (with --corpus)");
  auto* corpus_opt = order->add_option("--corpus", order_args.corpus, "Corpus CSV for --id");
  text_opt->excludes(id_opt);
  id_opt->needs(corpus_opt);
  order->add_option("--scorer", order_args.scorer.spec,
                    "ref:uniform:<p> | ref:neighbor | table:<path> | remote[:<url>]");
  order->add_option("--cap", order_args.cap, "Word cap")->check(CLI::Range(1, 30));
  order->add_option("--format", order_args.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}));
  add_transport_flags(order, order_args.scorer);

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Corpus-scale optimal vs causal analysis");
  analyze->add_option("--corpus", analyze_args.corpus, "Corpus CSV")->required();
  analyze->add_option("--masked-scorer", analyze_args.masked.spec, "Non-causal scorer");
  analyze->add_option("--causal-scorer", analyze_args.causal.spec, "Causal scorer");
  analyze->add_option("--bins", analyze_args.bins, "Histogram bins")->check(CLI::PositiveNumber);
  analyze->add_option("--workers", analyze_args.workers, "Parallel sentences")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--cap", analyze_args.cap, "Word cap")->check(CLI::Range(1, 30));
  analyze->add_option("--out", analyze_args.out_dir, "Report directory");
  analyze->add_option("--hist-range", analyze_args.hist_range, "Histogram range lo hi")
      ->expected(2)
      ->delimiter(',');
  analyze->add_flag("--lenient", analyze_args.lenient, "Skip triplet-completeness checks");
  add_transport_flags(analyze, analyze_args.masked);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a corpus file");
  validate->add_option("corpus", validate_path, "Corpus CSV")->required();

  std::size_t max_n = 6;
  std::size_t trials = 50;
  std::uint64_t seed = 20240917;
  auto* selfcheck = app.add_subcommand("selfcheck", "Viterbi vs brute force on random tables");
  selfcheck->add_option("--max-n", max_n, "Largest sentence length")->check(CLI::Range(2, 8));
  selfcheck->add_option("--trials", trials, "Random tables per length")->check(CLI::PositiveNumber);
  selfcheck->add_option("--seed", seed, "Base seed");

  std::string tables_corpus;
  std::string tables_out;
  std::uint64_t tables_seed = 1;
  auto* make_tables = app.add_subcommand("make-tables", "Write random table-scorer fixtures for a corpus");
  make_tables->add_option("--corpus", tables_corpus, "Corpus CSV")->required();
  make_tables->add_option("--out-dir", tables_out, "Output directory")->required();
  make_tables->add_option("--seed", tables_seed, "Base seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (order->parsed() && order_args.text.empty() && order_args.id.empty()) {
      throw CLI::ValidationError("order", "one of --text or --id is required");
    }
    if (analyze->parsed() && !analyze_args.hist_range.empty() &&
        !(analyze_args.hist_range[0] < analyze_args.hist_range[1])) {
      throw CLI::ValidationError("--hist-range", "expected lo < hi");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (order->parsed()) return cmd_order(order_args, out);
    if (analyze->parsed()) return cmd_analyze(analyze_args, out, err);
    if (validate->parsed()) return cmd_validate(validate_path, out, err);
    if (selfcheck->parsed()) return cmd_selfcheck(max_n, trials, seed, out, err);
    if (make_tables->parsed()) return cmd_make_tables(tables_corpus, tables_out, tables_seed, out);
  } catch (...) {
    return report_exception(err);
  }
  return kUsage;
}

}  // namespace mlorder::cli
