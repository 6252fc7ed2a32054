#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "mlorder/scorer.hpp"

namespace mlorder {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

}  // namespace

void ScoreTable::set_masked(Mask filled, std::size_t target, double p) {
  if (target >= kMaxLatticeWidth) throw ContractViolation("target position too large");
  if ((filled >> target) & 1U) {
    throw ContractViolation("target " + std::to_string(target) + " is in the filled set");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("probability outside [0, 1]");
  masked_[{filled, target}] = p;
}

void ScoreTable::set_causal(std::size_t target, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("probability outside [0, 1]");
  causal_[target] = p;
}

std::optional<double> ScoreTable::masked(Mask filled, std::size_t target) const {
  auto it = masked_.find({filled, target});
  if (it == masked_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> ScoreTable::causal(std::size_t target) const {
  auto it = causal_.find(target);
  if (it == causal_.end()) return std::nullopt;
  return it->second;
}

ScoreTable ScoreTable::parse(std::istream& in, const std::string& source) {
  ScoreTable table;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto fail = [&](const std::string& msg) { throw ParseError(source, line_no, msg); };
    auto fields = split_commas(line);

    // Trailing fields are always target:<k>,p:<decimal>.
    if (fields.size() < 3) fail("expected at least 3 comma-separated fields");
    auto target_field = fields[fields.size() - 2];
    auto p_field = fields.back();
    if (!target_field.starts_with("target:")) fail("expected target:<k>");
    if (!p_field.starts_with("p:")) fail("expected p:<decimal>");
    std::size_t target = 0;
    if (!parse_number(target_field.substr(7), target)) fail("bad target index");
    if (target >= kMaxLatticeWidth) fail("target index too large");
    double p = 0.0;
    if (!parse_number(p_field.substr(2), p)) fail("bad probability");
    if (!(p >= 0.0 && p <= 1.0)) fail("probability outside [0, 1]");

    if (fields[0] == "causal") {
      if (fields.size() != 3) fail("causal record takes exactly target and p");
      if (table.causal_.contains(target)) fail("duplicate causal entry");
      table.causal_[target] = p;
      continue;
    }

    if (!fields[0].starts_with("masked:")) fail("record must start with masked: or causal");
    std::vector<std::string_view> positions;
    positions.push_back(fields[0].substr(7));
    for (std::size_t i = 1; i + 2 < fields.size(); ++i) positions.push_back(fields[i]);

    Mask filled = 0;
    if (positions.size() == 1 && positions[0] == "none") {
      filled = 0;
    } else {
      for (auto tok : positions) {
        std::size_t pos = 0;
        if (!parse_number(tok, pos)) fail("bad filled position '" + std::string(tok) + "'");
        if (pos >= kMaxLatticeWidth) fail("filled position too large");
        if ((filled >> pos) & 1U) fail("filled position listed twice");
        filled |= Mask{1} << pos;
      }
    }
    if ((filled >> target) & 1U) fail("target is listed as filled");
    if (table.masked_.contains({filled, target})) fail("duplicate masked entry");
    table.masked_[{filled, target}] = p;
  }
  return table;
}

ScoreTable ScoreTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open table file '" + path.string() + "'");
  return parse(in, path.string());
}

void ScoreTable::write(std::ostream& out) const {
  for (const auto& [key, p] : masked_) {
    const auto& [filled, target] = key;
    out << "masked:";
    if (filled == 0) {
      out << "none";
    } else {
      bool first = true;
      for (std::size_t k = 0; k < kMaxLatticeWidth; ++k) {
        if (((filled >> k) & 1U) == 0) continue;
        if (!first) out << ',';
        out << k;
        first = false;
      }
    }
    out << ",target:" << target << ",p:" << format_probability(p) << '\n';
  }
  for (const auto& [target, p] : causal_) {
    out << "causal,target:" << target << ",p:" << format_probability(p) << '\n';
  }
}

ScoreTable ScoreTable::random(std::size_t n, std::uint64_t seed) {
  if (n < 1 || n > kMaxLatticeWidth) throw SizeLimitError("random table width out of range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_p(std::log(1e-4), 0.0);
  ScoreTable table;
  const Mask full = SubsetState::full_mask(n);
  for (Mask filled = 0; filled < full; ++filled) {
    for (std::size_t k = 0; k < n; ++k) {
      if ((filled >> k) & 1U) continue;
      table.masked_[{filled, k}] = std::exp(log_p(rng));
    }
  }
  for (std::size_t k = 0; k < n; ++k) table.causal_[k] = std::exp(log_p(rng));
  return table;
}

}  // namespace mlorder
