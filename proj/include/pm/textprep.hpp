// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pm {

constexpr std::int32_t kPadId = 0;
constexpr std::int32_t kOovId = 1;
constexpr std::int32_t kFirstTokenId = 2;

inline const char* kOovMarker = "OOV";
inline const char* kPadMarker = "PAD";

// Sentence/word tokenized text of one report. Sentences keep their source
// field index so downstream fragment extraction never merges across fields.
struct TokenizedReport {
  std::string report_id;
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::size_t> sentence_field;  // index into the fixed field order

  std::vector<std::string> flat_tokens() const;
  bool empty() const { return sentences.empty(); }
};

// Fixed field concatenation order; truncation behavior depends on it.
std::span<const std::string> field_order();

// Strip HTML tags, drop non-ASCII bytes, lowercase, split into sentences on
// [.!?;] followed by whitespace (or end of field), split words on whitespace
// with each punctuation character detached as its own token. Field texts are
// processed in the fixed order; a field boundary always ends a sentence.
TokenizedReport preprocess(const std::vector<std::string>& raw_fields,
                           const std::string& report_id = "");

// Run-together token repair: if `token` is unknown and splits into exactly
// two lexicon words, return the split maximizing the minimum part length
// (leftmost on ties); otherwise the token unchanged.
std::vector<std::string> segment_repair(const std::string& token,
                                        const std::set<std::string>& lexicon);

// Applies segment_repair to every token of a report.
TokenizedReport repair_report(const TokenizedReport& rep,
                              const std::set<std::string>& lexicon);

// Frequency-ranked token -> id map. Ids 0 and 1 are reserved for padding and
// out-of-vocabulary; retained tokens (count >= min_count) get ids from 2 by
// strictly decreasing frequency, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(const std::vector<TokenizedReport>& corpus,
                          std::size_t min_count = 5);

  std::int32_t lookup(const std::string& token) const;  // OOV -> 1
  bool contains(const std::string& token) const;
  // Token string for an id; 0 -> "PAD", 1 -> "OOV".
  const std::string& token_of(std::int32_t id) const;
  std::size_t count_of(std::int32_t id) const;

  std::size_t size() const { return tokens_.size() + 2; }  // includes ids 0,1
  std::size_t retained() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }

  // Lexicon view (retained tokens) for segment repair.
  std::set<std::string> lexicon() const;

  // TSV persistence: header line `min_count\t<n>`, then `token\tcount` rows
  // ordered by id (row 0 corresponds to id 2).
  void save_tsv(const std::string& path) const;
  static Vocabulary load_tsv(const std::string& path);

 private:
  std::vector<std::string> tokens_;  // index i -> id i + 2
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::size_t min_count_ = 5;
};

// Unified encoded input: rows x cols id grid. CNN inputs use rows == 1.
struct Encoded {
  std::size_t rows = 0, cols = 0;
  std::vector<std::int32_t> ids;

  std::int32_t at(std::size_t r, std::size_t c) const {
    return ids[r * cols + c];
  }
};

// Flat id sequence of exact length s: right zero-padding, truncation keeps
// the first s tokens, OOV tokens map to id 1.
Encoded encode_cnn(const TokenizedReport& rep, const Vocabulary& vocab,
                   std::size_t s = 200);

// max_sents x max_words id grid with the same pad/truncate/OOV rules in two
// dimensions. Empty sentences are skipped, earliest sentences kept.
Encoded encode_han(const TokenizedReport& rep, const Vocabulary& vocab,
                   std::size_t max_words = 50, std::size_t max_sents = 14);

}  // namespace pm
