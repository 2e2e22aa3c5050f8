// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pm {

// Raised on bad user input (malformed files, invalid configuration). The CLI
// maps it to exit code 1; anything else non-zero maps to 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One raw incident record: free-text fields plus one or more outcome labels.
struct Report {
  std::string id;
  std::map<std::string, std::string> fields;  // field name -> raw text
  std::map<std::string, std::set<std::string>> labels;  // outcome -> categories

  bool has_text() const;
  // Field texts in the fixed concatenation order (missing fields empty).
  std::vector<std::string> ordered_fields() const;
};

struct OutcomeSchema {
  std::string name;
  std::vector<std::string> categories;  // ordered; defines head width K

  std::size_t k() const { return categories.size(); }
  int category_index(const std::string& c) const;  // -1 when unknown
};

std::vector<OutcomeSchema> load_schemas(const std::string& path);
const OutcomeSchema& schema_by_name(const std::vector<OutcomeSchema>& schemas,
                                    const std::string& name);

// Reports labeled with more than one category contribute one
// (report, category) pair per label, created only after the id-level split.
struct LabeledPair {
  std::string report_id;
  std::string category;

  bool operator==(const LabeledPair&) const = default;
};

struct DatasetSplit {
  std::string outcome;
  std::vector<std::string> train_ids, val_ids, test_ids;
  std::vector<LabeledPair> expanded_train, expanded_val, expanded_test;
};

struct ClassWeights {
  std::string outcome;
  std::map<std::string, double> weight;  // category -> positive real
};

struct LeakageFilterConfig {
  enum class Mode { DropSentence, TruncateAfter };
  std::set<std::string> excluded_fields;
  std::vector<std::string> stop_keywords;  // lowercase phrases
  Mode mode = Mode::DropSentence;

  bool active() const {
    return !excluded_fields.empty() || !stop_keywords.empty();
  }
};

// JSONL: one object per line with keys id, fields, labels.
// CSV: columns id,title,description,details,root_cause,<outcome>... with
// `;`-separated multi-labels. Records with no usable text are rejected with
// their line number; unknown outcomes, unknown categories and duplicate ids
// are hard errors.
enum class CorpusFormat { Jsonl, Csv };
std::vector<Report> load_corpus(const std::string& path, CorpusFormat format,
                                const std::vector<OutcomeSchema>& schemas);

// 90/10 train/test split of the ids labeled for `outcome`, then
// val_frac_of_train of the remaining training ids as validation
// (counts floor; uniform sampling, deterministic under seed).
// Multi-label expansion happens strictly after the id-level split.
DatasetSplit make_splits(const std::vector<Report>& reports,
                         const std::string& outcome, double test_frac,
                         double val_frac_of_train, std::uint64_t seed);

// weight_c = count_max / count_c over the expanded training pairs; the most
// frequent category gets exactly 1.0.
ClassWeights class_weights(const std::vector<LabeledPair>& expanded_train,
                           const OutcomeSchema& schema);

// Returns a filtered copy: excluded fields emptied; in drop-sentence mode
// every sentence containing a stop keyword is removed, in truncate-after
// mode the text is cut at the first keyword occurrence. Matching is done on
// lowercased text; kept text preserves its original bytes.
Report apply_leakage_filters(const Report& report,
                             const LeakageFilterConfig& config);

}  // namespace pm
