#include "mlorder/core.hpp"

#include <bit>
#include <sstream>

namespace mlorder {

ParseError::ParseError(std::string source, std::size_t line, const std::string& what)
    : Error(source + ":" + std::to_string(line) + ": " + what),
      source_(std::move(source)),
      line_(line) {}

std::string_view to_string(SentenceType t) noexcept {
  switch (t) {
    case SentenceType::declarative:
      return "declarative";
    case SentenceType::interrogative:
      return "interrogative";
  }
  return "?";
}

std::string_view to_string(Structure s) noexcept {
  switch (s) {
    case Structure::SVO:
      return "SVO";
    case Structure::SOV:
      return "SOV";
    case Structure::VSO:
      return "VSO";
    case Structure::VOS:
      return "VOS";
    case Structure::OSV:
      return "OSV";
    case Structure::OVS:
      return "OVS";
  }
  return "?";
}

std::optional<SentenceType> parse_sentence_type(std::string_view s) noexcept {
  for (auto t : kAllSentenceTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<Structure> parse_structure(std::string_view s) noexcept {
  for (auto st : kAllStructures) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

LogProb::LogProb(double value) : value_(value) {
  if (std::isnan(value)) throw ContractViolation("log-probability is NaN");
  if (value > 0.0) {
    throw ContractViolation("log-probability " + std::to_string(value) + " is positive");
  }
}

LogProb LogProb::from_probability(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) {
    throw ContractViolation("probability " + std::to_string(p) + " outside [0, 1]");
  }
  if (p == 0.0) return impossible();
  return LogProb(std::log(p));
}

Sentence::Sentence(std::string id, std::string text, std::vector<std::string> words,
                   SentenceLabels labels)
    : id_(std::move(id)), text_(std::move(text)), words_(std::move(words)),
      labels_(std::move(labels)) {
  if (words_.size() < 2) {
    throw TooShortError("sentence '" + id_ + "' has " + std::to_string(words_.size()) +
                        " word(s); at least 2 are required");
  }
  for (const auto& w : words_) {
    if (w.empty()) throw ContractViolation("sentence '" + id_ + "' contains an empty word");
  }
}

SubsetState::SubsetState(std::size_t n, Mask filled) : n_(n), filled_(filled) {
  if (n > kMaxLatticeWidth) {
    throw SizeLimitError("subset state width " + std::to_string(n) + " exceeds " +
                         std::to_string(kMaxLatticeWidth));
  }
  if ((filled & ~full_mask(n)) != 0) {
    throw ContractViolation("filled set has bits outside [0, " + std::to_string(n) + ")");
  }
}

SubsetState SubsetState::from_positions(std::size_t n, std::span<const std::size_t> positions) {
  Mask m = 0;
  for (auto p : positions) {
    if (p >= n) throw ContractViolation("position " + std::to_string(p) + " out of range");
    m |= Mask{1} << p;
  }
  return {n, m};
}

std::size_t SubsetState::filled_count() const noexcept {
  return static_cast<std::size_t>(std::popcount(filled_));
}

SubsetState SubsetState::with(std::size_t k) const {
  if (k >= n_) throw ContractViolation("position " + std::to_string(k) + " out of range");
  return {n_, filled_ | (Mask{1} << k)};
}

std::vector<std::size_t> SubsetState::filled_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n_; ++k) {
    if (contains(k)) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> SubsetState::masked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n_; ++k) {
    if (!contains(k)) out.push_back(k);
  }
  return out;
}

std::string to_string(const SubsetState& s) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (auto p : s.filled_positions()) {
    if (!first) os << ',';
    os << p;
    first = false;
  }
  os << "}/" << s.n();
  return os.str();
}

std::vector<std::size_t> order_to_ranks(std::span<const std::size_t> order) {
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> ranks(order.size(), kUnset);
  for (std::size_t step = 0; step < order.size(); ++step) {
    const auto p = order[step];
    if (p >= order.size()) {
      throw InvalidPermutation("position " + std::to_string(p) + " out of range for length " +
                               std::to_string(order.size()));
    }
    if (ranks[p] != kUnset) {
      throw InvalidPermutation("position " + std::to_string(p) + " appears more than once");
    }
    ranks[p] = step;
  }
  return ranks;
}

OrderPermutation::OrderPermutation(std::vector<std::size_t> order)
    : order_(std::move(order)), ranks_(order_to_ranks(order_)) {}

OrderPermutation OrderPermutation::identity(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  return OrderPermutation(std::move(order));
}

}  // namespace mlorder
