#pragma once

#include "mlorder/core.hpp"
#include "mlorder/scorer.hpp"

namespace mlorder {

/// Left-to-right log-probability of the whole sentence: the sum of the
/// causal scorer's per-word entries, accumulated in word order. No length
/// normalization.
LogProb causal_sequence_logprob(const Sentence& sentence, const Scorer& causal_scorer);

}  // namespace mlorder
