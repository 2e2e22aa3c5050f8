// SPDX-License-Identifier: Apache-2.0
#include "pm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pm/rng.hpp"
#include "pm/textprep.hpp"

namespace pm {

using nlohmann::json;

bool Report::has_text() const {
  for (const auto& [name, text] : fields) {
    (void)name;
    if (!text.empty()) return true;
  }
  return false;
}

std::vector<std::string> Report::ordered_fields() const {
  std::vector<std::string> out;
  for (const auto& name : field_order()) {
    auto it = fields.find(name);
    out.push_back(it == fields.end() ? std::string() : it->second);
  }
  return out;
}

int OutcomeSchema::category_index(const std::string& c) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == c) return static_cast<int>(i);
  return -1;
}

std::vector<OutcomeSchema> load_schemas(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("schema file " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw ValidationError("schema file must be a JSON array");
  std::vector<OutcomeSchema> out;
  for (const auto& item : doc) {
    OutcomeSchema s;
    s.name = item.at("name").get<std::string>();
    for (const auto& c : item.at("categories"))
      s.categories.push_back(c.get<std::string>());
    if (s.categories.size() < 2)
      throw ValidationError("outcome '" + s.name + "' needs at least 2 categories");
    std::set<std::string> uniq(s.categories.begin(), s.categories.end());
    if (uniq.size() != s.categories.size())
      throw ValidationError("outcome '" + s.name + "' has duplicate categories");
    out.push_back(std::move(s));
  }
  return out;
}

const OutcomeSchema& schema_by_name(const std::vector<OutcomeSchema>& schemas,
                                    const std::string& name) {
  for (const auto& s : schemas)
    if (s.name == name) return s;
  throw ValidationError("unknown outcome: " + name);
}

namespace {

const OutcomeSchema* find_schema(const std::vector<OutcomeSchema>& schemas,
                                 const std::string& name) {
  for (const auto& s : schemas)
    if (s.name == name) return &s;
  return nullptr;
}

void validate_labels(const Report& rep,
                     const std::vector<OutcomeSchema>& schemas,
                     std::size_t line) {
  for (const auto& [outcome, cats] : rep.labels) {
    const OutcomeSchema* schema = find_schema(schemas, outcome);
    if (!schema)
      throw ValidationError("line " + std::to_string(line) +
                            ": unknown outcome '" + outcome + "'");
    if (cats.empty())
      throw ValidationError("line " + std::to_string(line) + ": outcome '" +
                            outcome + "' has an empty label set");
    for (const auto& c : cats)
      if (schema->category_index(c) < 0)
        throw ValidationError("line " + std::to_string(line) +
                              ": category '" + c + "' not in schema for '" +
                              outcome + "'");
  }
}

bool known_field(const std::string& name) {
  for (const auto& f : field_order())
    if (f == name) return true;
  return false;
}

Report parse_jsonl_record(const std::string& line, std::size_t line_no) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError("line " + std::to_string(line_no) +
                          ": malformed JSON (" + e.what() + ")");
  }
  Report rep;
  try {
    rep.id = doc.at("id").get<std::string>();
    for (const auto& [key, val] : doc.at("fields").items()) {
      if (!known_field(key))
        throw ValidationError("line " + std::to_string(line_no) +
                              ": unknown field '" + key + "'");
      rep.fields[key] = val.get<std::string>();
    }
    if (doc.contains("labels")) {
      for (const auto& [outcome, cats] : doc.at("labels").items()) {
        std::set<std::string> set;
        for (const auto& c : cats) set.insert(c.get<std::string>());
        rep.labels[outcome] = std::move(set);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("line " + std::to_string(line_no) +
                          ": malformed record (" + e.what() + ")");
  }
  return rep;
}

// Minimal RFC-4180 CSV row parser (quoted fields, doubled quotes).
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep))
    if (!cur.empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

std::vector<Report> load_corpus(const std::string& path, CorpusFormat format,
                                const std::vector<OutcomeSchema>& schemas) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file: " + path);

  std::vector<Report> reports;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> csv_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    Report rep;
    if (format == CorpusFormat::Jsonl) {
      rep = parse_jsonl_record(line, line_no);
    } else {
      auto cells = split_csv_row(line);
      if (csv_header.empty()) {
        csv_header = cells;
        if (csv_header.empty() || csv_header[0] != "id")
          throw ValidationError("CSV header must start with 'id'");
        continue;
      }
      if (cells.size() != csv_header.size())
        throw ValidationError("line " + std::to_string(line_no) +
                              ": expected " + std::to_string(csv_header.size()) +
                              " cells, got " + std::to_string(cells.size()));
      rep.id = cells[0];
      for (std::size_t c = 1; c < cells.size(); ++c) {
        const std::string& col = csv_header[c];
        if (known_field(col)) {
          rep.fields[col] = cells[c];
        } else {
          auto cats = split_on(cells[c], ';');
          if (!cats.empty())
            rep.labels[col] = {cats.begin(), cats.end()};
        }
      }
    }

    if (rep.id.empty())
      throw ValidationError("line " + std::to_string(line_no) + ": empty id");
    if (!seen_ids.insert(rep.id).second)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate id '" + rep.id + "'");
    if (!rep.has_text())
      throw ValidationError("line " + std::to_string(line_no) +
                            ": record '" + rep.id + "' has no usable text field");
    validate_labels(rep, schemas, line_no);
    reports.push_back(std::move(rep));
  }
  return reports;
}

DatasetSplit make_splits(const std::vector<Report>& reports,
                         const std::string& outcome, double test_frac,
                         double val_frac_of_train, std::uint64_t seed) {
  if (test_frac <= 0.0 || test_frac >= 1.0)
    throw ValidationError("test_frac must be in (0,1)");
  if (val_frac_of_train <= 0.0 || val_frac_of_train >= 1.0)
    throw ValidationError("val_frac_of_train must be in (0,1)");

  std::vector<const Report*> eligible;
  for (const auto& rep : reports) {
    auto it = rep.labels.find(outcome);
    if (it == rep.labels.end() || it->second.empty()) continue;
    if (!rep.has_text()) continue;
    eligible.push_back(&rep);
  }
  if (eligible.size() < 10)
    throw ValidationError("too few reports labeled for outcome '" + outcome +
                          "': " + std::to_string(eligible.size()));

  std::vector<std::size_t> order(eligible.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = eligible.size();
  const std::size_t n_test = static_cast<std::size_t>(
      static_cast<double>(n) * test_frac);
  const std::size_t n_train_pool = n - n_test;
  const std::size_t n_val = static_cast<std::size_t>(
      static_cast<double>(n_train_pool) * val_frac_of_train);

  DatasetSplit split;
  split.outcome = outcome;
  for (std::size_t i = 0; i < n; ++i) {
    const Report* r = eligible[order[i]];
    if (i < n_test)
      split.test_ids.push_back(r->id);
    else if (i < n_test + n_val)
      split.val_ids.push_back(r->id);
    else
      split.train_ids.push_back(r->id);
  }

  // expansion strictly after the id-level split
  auto expand = [&](const std::vector<std::string>& ids,
                    std::vector<LabeledPair>& out) {
    std::map<std::string, const Report*> by_id;
    for (const Report* r : eligible) by_id.emplace(r->id, r);
    for (const auto& id : ids) {
      const Report* r = by_id.at(id);
      for (const auto& cat : r->labels.at(outcome))
        out.push_back({id, cat});
    }
  };
  expand(split.train_ids, split.expanded_train);
  expand(split.val_ids, split.expanded_val);
  expand(split.test_ids, split.expanded_test);
  return split;
}

ClassWeights class_weights(const std::vector<LabeledPair>& expanded_train,
                           const OutcomeSchema& schema) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : schema.categories) counts[c] = 0;
  for (const auto& pair : expanded_train) {
    auto it = counts.find(pair.category);
    if (it == counts.end())
      throw ValidationError("category '" + pair.category +
                            "' not in schema '" + schema.name + "'");
    ++it->second;
  }
  std::size_t count_max = 0;
  for (const auto& [cat, cnt] : counts) count_max = std::max(count_max, cnt);
  ClassWeights w;
  w.outcome = schema.name;
  for (const auto& [cat, cnt] : counts) {
    if (cnt == 0)
      throw ValidationError("category '" + cat +
                            "' has no training examples; split unusable for "
                            "weighted training");
    w.weight[cat] =
        static_cast<double>(count_max) / static_cast<double>(cnt);
  }
  return w;
}

namespace {

std::string lowercase(const std::string& s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool contains_keyword(const std::string& lower_text,
                      const std::vector<std::string>& keywords) {
  for (const auto& kw : keywords)
    if (!kw.empty() && lower_text.find(kw) != std::string::npos) return true;
  return false;
}

// Sentence boundaries as in preprocessing: [.!?;] followed by whitespace or
// end of text.
std::vector<std::string> split_sentences_raw(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const char c = text[i];
    const bool end = (c == '.' || c == '!' || c == '?' || c == ';') &&
                     (i + 1 == text.size() ||
                      std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string filter_text(const std::string& text,
                        const LeakageFilterConfig& config) {
  if (config.stop_keywords.empty()) return text;
  if (config.mode == LeakageFilterConfig::Mode::DropSentence) {
    std::string out;
    for (const auto& sentence : split_sentences_raw(text)) {
      if (contains_keyword(lowercase(sentence), config.stop_keywords)) continue;
      const std::string kept = trim(sentence);
      if (kept.empty()) continue;
      if (!out.empty()) out.push_back(' ');
      out += kept;
    }
    return out;
  }
  // truncate-after: cut at the first keyword occurrence
  const std::string lower = lowercase(text);
  std::size_t cut = std::string::npos;
  for (const auto& kw : config.stop_keywords) {
    if (kw.empty()) continue;
    const auto p = lower.find(kw);
    if (p != std::string::npos) cut = std::min(cut, p);
  }
  if (cut == std::string::npos) return text;
  return trim(text.substr(0, cut));
}

}  // namespace

Report apply_leakage_filters(const Report& report,
                             const LeakageFilterConfig& config) {
  Report out = report;
  for (auto& [name, text] : out.fields) {
    if (config.excluded_fields.count(name)) {
      text.clear();
      continue;
    }
    text = filter_text(text, config);
  }
  return out;
}

}  // namespace pm
