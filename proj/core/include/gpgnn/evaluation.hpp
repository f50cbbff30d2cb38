// Copyright 2026 The gpgnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Sentence-level accuracy / macro-F1 and bag-level ranking metrics.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gpgnn/model.hpp"
#include "gpgnn/relations.hpp"

namespace gpgnn::eval {

/// Model output for one ordered entity pair of one sentence.
struct PredictionRecord {
  std::string sentence_id;
  std::size_t subject = 0;
  std::size_t object = 0;
  std::optional<std::string> subject_kb;
  std::optional<std::string> object_kb;
  std::vector<double> probabilities;
  std::optional<std::size_t> gold;

  /// Highest-probability class; ties go to the lower index.
  std::size_t predicted() const;
};

/// One record per graph edge of every sentence, in sentence order.
std::vector<PredictionRecord> predict_records(
    const model::GpGnnModel& model, std::span<const model::EncodedSentence> sentences);

struct SentenceMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t records = 0;
  /// Non-NA classes that entered the macro average.
  std::size_t classes = 0;
};

/// Accuracy over all records (NA included); macro-F1 averages per-class F1
/// over the non-NA classes that occur in gold or predictions. Throws
/// DataError on an empty set or a record without gold.
SentenceMetrics sentence_metrics(std::span<const PredictionRecord> records);

using BagKey = std::pair<std::string, std::string>;

struct BagScores {
  std::map<BagKey, std::vector<double>> scores;
  /// Records skipped because an entity had no kb_id.
  std::size_t excluded_records = 0;
};

/// Per-relation maximum over the sentences of each (subject, object) bag.
BagScores score_bags(std::span<const PredictionRecord> records);

struct Fact {
  BagKey bag;
  std::size_t relation = 0;

  auto operator<=>(const Fact&) const = default;
};

/// Non-NA gold facts of records that carry kb_ids.
std::set<Fact> gold_facts(std::span<const PredictionRecord> records);

struct RankedFact {
  Fact fact;
  double score = 0.0;
  bool correct = false;
};

/// Every (bag, non-NA relation) candidate scoring above `na_floor`, sorted by
/// score descending with ties broken by (bag key, relation).
std::vector<RankedFact> rank_facts(const BagScores& bags, const std::set<Fact>& gold,
                                   double na_floor = 0.0);

enum class Population { kPredictions, kGoldSize };
std::string population_name(Population p);
Population parse_population(const std::string& name);

/// Precision over the top ceil(k% * N) ranked facts, where N is the ranked
/// population size (kPredictions) or the gold fact count (kGoldSize).
/// Throws ConfigError unless 0 < k <= 100.
double precision_at_k_percent(std::span<const RankedFact> ranked, double k,
                              Population population = Population::kPredictions,
                              std::size_t gold_count = 0);

struct PrPoint {
  std::size_t rank = 0;
  double score = 0.0;
  bool correct = false;
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per rank. Throws DataError when gold_count is zero.
std::vector<PrPoint> pr_curve_points(std::span<const RankedFact> ranked,
                                     std::size_t gold_count);
/// Step-wise area: sum of precision * recall increment.
double pr_area(std::span<const PrPoint> points);
void write_pr_csv(std::ostream& out, std::span<const PrPoint> points);

struct EvalOptions {
  Population population = Population::kPredictions;
  double na_floor = 0.0;
  std::vector<double> p_at = {5, 10, 15, 20};
};

/// Metrics report JSON: accuracy, macro_f1, p_at, counts and decisions.
/// Bag metrics are null when no record carries kb_ids or gold facts.
std::string metrics_report_json(std::span<const PredictionRecord> records,
                                 const EvalOptions& options = {});

/// Line-delimited predictions with relation names from `relations`.
void write_predictions(std::ostream& out, std::span<const PredictionRecord> records,
                       const RelationVocab& relations);
std::vector<PredictionRecord> read_predictions(std::istream& in,
                                               const RelationVocab& relations);

}  // namespace gpgnn::eval
