#include "mlorder/causal.hpp"

namespace mlorder {

LogProb causal_sequence_logprob(const Sentence& sentence, const Scorer& causal_scorer) {
  const auto per_word = causal_scorer.score_causal(CausalScoreRequest{sentence});
  if (per_word.size() != sentence.size()) {
    throw ScorerError(ScorerError::Kind::protocol,
                      "causal scorer returned " + std::to_string(per_word.size()) +
                          " entries for " + std::to_string(sentence.size()) + " words");
  }
  LogProb total;
  for (auto lp : per_word) total += lp;
  return total;
}

}  // namespace mlorder
