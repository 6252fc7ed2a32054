#include "mlorder/corpus.hpp"

#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace mlorder {

namespace {

constexpr std::string_view kInvertedQuestion = "\xC2\xBF";     // ¿
constexpr std::string_view kInvertedExclamation = "\xC2\xA1";  // ¡
constexpr std::string_view kClosingPunctuation = ".?!,;";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool only_opening(std::string_view tok) {
  if (tok.empty()) return false;
  while (!tok.empty()) {
    if (tok.starts_with(kInvertedQuestion) || tok.starts_with(kInvertedExclamation)) {
      tok.remove_prefix(2);
    } else {
      return false;
    }
  }
  return true;
}

bool only_closing(std::string_view tok) {
  return !tok.empty() && tok.find_first_not_of(kClosingPunctuation) == std::string_view::npos;
}

// Splits one CSV record; returns false on a quoting error.
bool split_csv_record(std::string_view rec, std::vector<std::string>& fields) {
  fields.clear();
  std::string cur;
  bool in_quotes = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const char c = rec[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < rec.size() && rec[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) return false;
      in_quotes = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) return false;
      cur += c;
    }
  }
  if (in_quotes) return false;
  fields.push_back(std::move(cur));
  return true;
}

bool quotes_balanced(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += (c == '"');
  return n % 2 == 0;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<std::string> segment_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }

  std::vector<std::string> words;
  std::string pending_opening;
  for (auto& tok : tokens) {
    if (only_opening(tok)) {
      pending_opening += tok;
    } else if (only_closing(tok) && !words.empty() && pending_opening.empty()) {
      words.back() += tok;
    } else {
      words.push_back(pending_opening + tok);
      pending_opening.clear();
    }
  }
  if (!pending_opening.empty()) {
    if (words.empty()) {
      words.push_back(pending_opening);
    } else {
      words.back() += pending_opening;
    }
  }
  if (words.size() < 2) {
    throw TooShortError("text '" + std::string(text) + "' has fewer than 2 word units");
  }
  return words;
}

CorpusFile parse_corpus(std::istream& in, const std::string& source, bool strict) {
  CorpusFile corpus;
  corpus.source = source;

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "empty corpus file");
  ++line_no;
  line = strip_cr(std::move(line));
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  std::vector<std::string> fields;
  if (!split_csv_record(line, fields) ||
      fields != std::vector<std::string>{"id", "triplet_id", "sentence_type", "structure", "text"}) {
    throw ParseError(source, 1, "expected header id,triplet_id,sentence_type,structure,text");
  }

  std::unordered_set<std::string> ids;
  struct TripletInfo {
    std::set<Structure> structures;
    std::set<SentenceType> types;
    std::size_t rows = 0;
  };
  std::map<std::string, TripletInfo> triplets;

  while (std::getline(in, line)) {
    ++line_no;
    const auto record_line = line_no;
    std::string record = strip_cr(std::move(line));
    // Quoted fields may span lines.
    while (!quotes_balanced(record)) {
      std::string more;
      if (!std::getline(in, more)) throw ParseError(source, record_line, "unterminated quoted field");
      ++line_no;
      record += '\n';
      record += strip_cr(std::move(more));
    }
    if (record.find_first_not_of(" \t") == std::string::npos) continue;

    if (!split_csv_record(record, fields)) throw ParseError(source, record_line, "bad CSV quoting");
    if (fields.size() != 5) {
      throw ParseError(source, record_line,
                       "expected 5 fields, found " + std::to_string(fields.size()));
    }
    const auto& id = fields[0];
    const auto& triplet_id = fields[1];
    const auto& type_str = fields[2];
    const auto& structure_str = fields[3];
    const auto& text = fields[4];
    if (id.empty()) throw ParseError(source, record_line, "empty id");
    if (text.empty()) throw ParseError(source, record_line, "empty text");

    auto type = parse_sentence_type(type_str);
    auto structure = parse_structure(structure_str);
    if (!type || !structure || (strict && triplet_id.empty())) {
      std::string reason = !type ? "unknown sentence_type '" + type_str + "'"
                           : !structure ? "unknown structure '" + structure_str + "'"
                                        : std::string("empty triplet_id");
      if (strict) throw ValidationError(source + ":" + std::to_string(record_line) + ": " + reason);
      corpus.warnings.push_back("line " + std::to_string(record_line) + ": " + reason);
      continue;
    }

    std::vector<std::string> words;
    try {
      words = segment_words(text);
    } catch (const TooShortError& e) {
      throw ParseError(source, record_line, e.what());
    }

    if (!ids.insert(id).second) {
      throw ValidationError(source + ":" + std::to_string(record_line) + ": duplicate id '" + id + "'");
    }

    auto& info = triplets[triplet_id];
    info.structures.insert(*structure);
    info.types.insert(*type);
    ++info.rows;

    ++corpus.counts.by_type[*type];
    ++corpus.counts.by_type_structure[{*type, *structure}];
    corpus.records.emplace_back(id, text, std::move(words),
                                SentenceLabels{type, structure, triplet_id});
  }

  corpus.counts.triplets = triplets.size();
  std::vector<std::string> incomplete;
  for (const auto& [tid, info] : triplets) {
    const bool complete = info.rows == 6 && info.structures.size() == 6 && info.types.size() == 1;
    if (complete) {
      ++corpus.counts.complete_triplets;
    } else {
      incomplete.push_back(tid);
    }
  }
  if (strict && !incomplete.empty()) {
    std::string msg = source + ": incomplete triplet(s):";
    for (const auto& tid : incomplete) {
      const auto& info = triplets.at(tid);
      msg += " " + tid + " (" + std::to_string(info.structures.size()) + " of 6 structures";
      if (info.rows != info.structures.size()) msg += ", " + std::to_string(info.rows) + " rows";
      if (info.types.size() > 1) msg += ", mixed sentence types";
      msg += ")";
    }
    throw ValidationError(msg);
  }
  return corpus;
}

CorpusFile load_corpus(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file '" + path.string() + "'");
  return parse_corpus(in, path.string(), strict);
}

}  // namespace mlorder
