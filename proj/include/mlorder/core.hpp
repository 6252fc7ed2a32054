#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlorder {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPermutation : public Error {
 public:
  using Error::Error;
};

/// Raised when a sentence or lattice exceeds the configured word cap.
class SizeLimitError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (bad index, mismatched lengths...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class UndefinedRatioError : public Error {
 public:
  using Error::Error;
};

class TooShortError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class SentenceType { declarative, interrogative };
enum class Structure { SVO, SOV, VSO, VOS, OSV, OVS };

inline constexpr std::array<SentenceType, 2> kAllSentenceTypes{SentenceType::declarative,
                                                               SentenceType::interrogative};
inline constexpr std::array<Structure, 6> kAllStructures{Structure::SVO, Structure::SOV,
                                                         Structure::VSO, Structure::VOS,
                                                         Structure::OSV, Structure::OVS};

std::string_view to_string(SentenceType t) noexcept;
std::string_view to_string(Structure s) noexcept;
std::optional<SentenceType> parse_sentence_type(std::string_view s) noexcept;
std::optional<Structure> parse_structure(std::string_view s) noexcept;

// ---------------------------------------------------------------------------
// LogProb
// ---------------------------------------------------------------------------

/// Natural-log probability. Either finite and <= 0, or -inf for a zero
/// probability. Never NaN. Adding two LogProbs multiplies the probabilities.
class LogProb {
 public:
  constexpr LogProb() noexcept = default;
  explicit LogProb(double value);

  static LogProb from_probability(double p);
  static constexpr LogProb impossible() noexcept {
    LogProb lp;
    lp.value_ = -std::numeric_limits<double>::infinity();
    return lp;
  }

  constexpr double value() const noexcept { return value_; }
  bool is_impossible() const noexcept { return std::isinf(value_); }
  double probability() const noexcept { return std::exp(value_); }
  double log10() const noexcept { return value_ / std::numbers::ln10; }

  friend LogProb operator+(LogProb a, LogProb b) noexcept {
    LogProb r;
    r.value_ = a.value_ + b.value_;
    return r;
  }
  LogProb& operator+=(LogProb other) noexcept {
    value_ += other.value_;
    return *this;
  }
  friend bool operator==(LogProb a, LogProb b) noexcept { return a.value_ == b.value_; }
  friend std::partial_ordering operator<=>(LogProb a, LogProb b) noexcept {
    return a.value_ <=> b.value_;
  }

 private:
  double value_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sentence
// ---------------------------------------------------------------------------

struct SentenceLabels {
  std::optional<SentenceType> sentence_type;
  std::optional<Structure> structure;
  std::string triplet_id;
};

/// An ordered sequence of word units. Immutable after construction.
class Sentence {
 public:
  Sentence(std::string id, std::string text, std::vector<std::string> words,
           SentenceLabels labels = {});

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  std::size_t size() const noexcept { return words_.size(); }
  const SentenceLabels& labels() const noexcept { return labels_; }

 private:
  std::string id_;
  std::string text_;
  std::vector<std::string> words_;
  SentenceLabels labels_;
};

// ---------------------------------------------------------------------------
// SubsetState
// ---------------------------------------------------------------------------

using Mask = std::uint32_t;

/// Widest lattice a Mask can index.
inline constexpr std::size_t kMaxLatticeWidth = 30;

/// Set of filled (unmasked) word positions. The masked positions are the
/// complement within [0, n).
class SubsetState {
 public:
  SubsetState(std::size_t n, Mask filled);

  static SubsetState empty(std::size_t n) { return {n, 0}; }
  static SubsetState full(std::size_t n) { return {n, full_mask(n)}; }
  static SubsetState from_positions(std::size_t n, std::span<const std::size_t> positions);

  static constexpr Mask full_mask(std::size_t n) noexcept {
    return n == 0 ? Mask{0} : static_cast<Mask>((std::uint64_t{1} << n) - 1);
  }

  std::size_t n() const noexcept { return n_; }
  Mask filled() const noexcept { return filled_; }
  Mask masked() const noexcept { return full_mask(n_) & ~filled_; }
  bool contains(std::size_t k) const noexcept { return k < n_ && ((filled_ >> k) & 1U) != 0; }
  std::size_t filled_count() const noexcept;
  bool is_full() const noexcept { return filled_ == full_mask(n_); }

  SubsetState with(std::size_t k) const;
  std::vector<std::size_t> filled_positions() const;
  std::vector<std::size_t> masked_positions() const;

  friend bool operator==(const SubsetState&, const SubsetState&) = default;

 private:
  std::size_t n_;
  Mask filled_;
};

std::string to_string(const SubsetState& s);

// ---------------------------------------------------------------------------
// OrderPermutation
// ---------------------------------------------------------------------------

/// Rank vector r with r[p] = step at which position p is generated.
/// Throws InvalidPermutation on duplicates or out-of-range entries.
std::vector<std::size_t> order_to_ranks(std::span<const std::size_t> order);

/// A generation order: order[j] is the position filled at step j.
class OrderPermutation {
 public:
  explicit OrderPermutation(std::vector<std::size_t> order);
  static OrderPermutation identity(std::size_t n);

  const std::vector<std::size_t>& order() const noexcept { return order_; }
  const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
  std::size_t size() const noexcept { return order_.size(); }
  std::size_t operator[](std::size_t step) const { return order_.at(step); }

  friend bool operator==(const OrderPermutation& a, const OrderPermutation& b) {
    return a.order_ == b.order_;
  }

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> ranks_;
};

// ---------------------------------------------------------------------------
// AnalysisRecord
// ---------------------------------------------------------------------------

struct AnalysisRecord {
  std::string id;
  std::string triplet_id;
  std::string text;
  std::optional<SentenceType> sentence_type;
  std::optional<Structure> structure;
  std::vector<std::string> words;
  std::size_t n_words = 0;
  OrderPermutation optimal_order{std::vector<std::size_t>{}};
  LogProb logp_optimal_noncausal;
  LogProb logp_causal;
  double rho = 0.0;
  double ratio_db = 0.0;
};

}  // namespace mlorder
