#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mlorder/core.hpp"

namespace mlorder {

/// Split on whitespace. Tokens made only of inverted opening punctuation
/// (¿ ¡) attach to the following word; tokens made only of closing
/// punctuation (. ? ! , ;) attach to the preceding word. Case is kept.
/// Throws TooShortError when fewer than 2 units remain.
std::vector<std::string> segment_words(std::string_view text);

struct CorpusCounts {
  std::map<SentenceType, std::size_t> by_type;
  std::map<std::pair<SentenceType, Structure>, std::size_t> by_type_structure;
  std::size_t triplets = 0;
  std::size_t complete_triplets = 0;
};

struct CorpusFile {
  std::filesystem::path source;
  std::vector<Sentence> records;
  CorpusCounts counts;
  /// Rows skipped in lenient mode, as "line N: reason".
  std::vector<std::string> warnings;
};

/// CSV with header `id,triplet_id,sentence_type,structure,text` (RFC 4180
/// quoting). Malformed rows raise ParseError with the line number; duplicate
/// ids always raise ValidationError. In strict mode every label must be valid
/// and every triplet must carry all six structures with one sentence type;
/// otherwise rows with unknown labels are skipped with a warning.
CorpusFile parse_corpus(std::istream& in, const std::string& source, bool strict);
CorpusFile load_corpus(const std::filesystem::path& path, bool strict);

}  // namespace mlorder
