// SPDX-License-Identifier: Apache-2.0
#include "pm/textprep.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace pm {

std::vector<std::string> TokenizedReport::flat_tokens() const {
  std::vector<std::string> flat;
  for (const auto& s : sentences) flat.insert(flat.end(), s.begin(), s.end());
  return flat;
}

std::span<const std::string> field_order() {
  static const std::array<std::string, 4> kOrder = {
      "title", "description", "details", "root_cause"};
  return {kOrder.data(), kOrder.size()};
}

namespace {

bool is_sentence_end(char c) {
  return c == '.' || c == '!' || c == '?' || c == ';';
}

// Strips <...> tags, drops non-ASCII bytes, lowercases.
std::string clean_text(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_tag = false;
  for (unsigned char c : raw) {
    if (c == '<') {
      in_tag = true;
      continue;
    }
    if (c == '>') {
      if (in_tag) {
        in_tag = false;
        out.push_back(' ');  // tag acts as a separator
        continue;
      }
    }
    if (in_tag) continue;
    if (c > 126) continue;  // non-ASCII dropped
    if (c < 32 && c != '\t' && c != '\n' && c != '\r') continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (std::ispunct(static_cast<unsigned char>(c))) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return tokens;
}

}  // namespace

TokenizedReport preprocess(const std::vector<std::string>& raw_fields,
                           const std::string& report_id) {
  TokenizedReport rep;
  rep.report_id = report_id;
  for (std::size_t f = 0; f < raw_fields.size(); ++f) {
    const std::string text = clean_text(raw_fields[f]);
    // sentence split: terminator followed by whitespace or end of field
    std::vector<std::string> sentence_texts;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
      cur.push_back(text[i]);
      if (is_sentence_end(text[i]) &&
          (i + 1 == text.size() ||
           std::isspace(static_cast<unsigned char>(text[i + 1])))) {
        sentence_texts.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) sentence_texts.push_back(cur);

    for (auto& st : sentence_texts) {
      auto tokens = tokenize_words(st);
      if (tokens.empty()) continue;
      rep.sentences.push_back(std::move(tokens));
      rep.sentence_field.push_back(f);
    }
  }
  return rep;
}

std::vector<std::string> segment_repair(const std::string& token,
                                        const std::set<std::string>& lexicon) {
  if (lexicon.count(token)) return {token};
  std::size_t best_pos = 0;
  std::size_t best_min = 0;
  for (std::size_t pos = 1; pos < token.size(); ++pos) {
    const std::string left = token.substr(0, pos);
    const std::string right = token.substr(pos);
    if (!lexicon.count(left) || !lexicon.count(right)) continue;
    const std::size_t m = std::min(left.size(), right.size());
    if (m > best_min) {  // leftmost split wins ties
      best_min = m;
      best_pos = pos;
    }
  }
  if (best_min == 0) return {token};
  return {token.substr(0, best_pos), token.substr(best_pos)};
}

TokenizedReport repair_report(const TokenizedReport& rep,
                              const std::set<std::string>& lexicon) {
  TokenizedReport out;
  out.report_id = rep.report_id;
  out.sentence_field = rep.sentence_field;
  out.sentences.reserve(rep.sentences.size());
  for (const auto& sentence : rep.sentences) {
    std::vector<std::string> repaired;
    repaired.reserve(sentence.size());
    for (const auto& tok : sentence) {
      auto parts = segment_repair(tok, lexicon);
      repaired.insert(repaired.end(), parts.begin(), parts.end());
    }
    out.sentences.push_back(std::move(repaired));
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<TokenizedReport>& corpus,
                             std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& rep : corpus)
    for (const auto& sentence : rep.sentences)
      for (const auto& tok : sentence) ++counts[tok];

  std::vector<std::pair<std::string, std::size_t>> retained;
  for (auto& [tok, cnt] : counts)
    if (cnt >= min_count) retained.emplace_back(tok, cnt);
  std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_count_ = min_count;
  v.tokens_.reserve(retained.size());
  v.counts_.reserve(retained.size());
  for (std::size_t i = 0; i < retained.size(); ++i) {
    v.tokens_.push_back(retained[i].first);
    v.counts_.push_back(retained[i].second);
    v.ids_.emplace(retained[i].first,
                   static_cast<std::int32_t>(i) + kFirstTokenId);
  }
  return v;
}

std::int32_t Vocabulary::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kOovId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) != 0;
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  static const std::string pad = kPadMarker;
  static const std::string oov = kOovMarker;
  if (id == kPadId) return pad;
  if (id == kOovId) return oov;
  const auto idx = static_cast<std::size_t>(id - kFirstTokenId);
  if (idx >= tokens_.size()) throw std::out_of_range("Vocabulary::token_of");
  return tokens_[idx];
}

std::size_t Vocabulary::count_of(std::int32_t id) const {
  const auto idx = static_cast<std::size_t>(id - kFirstTokenId);
  if (id < kFirstTokenId || idx >= counts_.size())
    throw std::out_of_range("Vocabulary::count_of");
  return counts_[idx];
}

std::set<std::string> Vocabulary::lexicon() const {
  return {tokens_.begin(), tokens_.end()};
}

void Vocabulary::save_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << "min_count\t" << min_count_ << "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    out << tokens_[i] << "\t" << counts_[i] << "\n";
}

Vocabulary Vocabulary::load_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("min_count\t", 0) != 0)
    throw std::runtime_error("vocabulary file missing min_count header: " + path);
  Vocabulary v;
  v.min_count_ = std::stoul(line.substr(line.find('\t') + 1));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("malformed vocabulary row: " + line);
    v.tokens_.push_back(line.substr(0, tab));
    v.counts_.push_back(std::stoul(line.substr(tab + 1)));
    v.ids_.emplace(v.tokens_.back(),
                   static_cast<std::int32_t>(v.tokens_.size()) - 1 +
                       kFirstTokenId);
  }
  return v;
}

Encoded encode_cnn(const TokenizedReport& rep, const Vocabulary& vocab,
                   std::size_t s) {
  Encoded enc;
  enc.rows = 1;
  enc.cols = s;
  enc.ids.assign(s, kPadId);
  std::size_t i = 0;
  for (const auto& sentence : rep.sentences) {
    for (const auto& tok : sentence) {
      if (i >= s) return enc;
      enc.ids[i++] = vocab.lookup(tok);
    }
  }
  return enc;
}

Encoded encode_han(const TokenizedReport& rep, const Vocabulary& vocab,
                   std::size_t max_words, std::size_t max_sents) {
  Encoded enc;
  enc.rows = max_sents;
  enc.cols = max_words;
  enc.ids.assign(max_sents * max_words, kPadId);
  std::size_t r = 0;
  for (const auto& sentence : rep.sentences) {
    if (sentence.empty()) continue;
    if (r >= max_sents) break;
    for (std::size_t c = 0; c < sentence.size() && c < max_words; ++c)
      enc.ids[r * max_words + c] = vocab.lookup(sentence[c]);
    ++r;
  }
  return enc;
}

}  // namespace pm
