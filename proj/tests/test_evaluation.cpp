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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"
#include "gpgnn/evaluation.hpp"
#include "gpgnn/random.hpp"
#include "gpgnn/tensor.hpp"

namespace gpgnn::eval {
namespace {

// Classes: 0 = NA, 1 = A, 2 = B.
PredictionRecord record(std::size_t gold, std::size_t predicted, std::size_t classes = 3) {
  PredictionRecord r;
  r.sentence_id = "s";
  r.probabilities.assign(classes, 0.1 / static_cast<double>(classes - 1));
  r.probabilities[predicted] = 0.9;
  r.gold = gold;
  return r;
}

PredictionRecord bag_record(const std::string& s, const std::string& o,
                            std::vector<double> probs, std::size_t gold = 0) {
  PredictionRecord r;
  r.sentence_id = s + o;
  r.subject_kb = s;
  r.object_kb = o;
  r.probabilities = std::move(probs);
  r.gold = gold;
  return r;
}

TEST(SentenceMetrics, AllCorrect) {
  const std::vector<PredictionRecord> records = {record(1, 1), record(2, 2), record(0, 0)};
  const auto m = sentence_metrics(records);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
}

TEST(SentenceMetrics, HandComputedConfusion) {
  const std::vector<PredictionRecord> records = {record(1, 1), record(1, 0), record(2, 2),
                                                 record(0, 2)};
  const auto m = sentence_metrics(records);
  EXPECT_EQ(m.classes, 2u);
  EXPECT_DOUBLE_EQ(m.macro_f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
}

TEST(SentenceMetrics, AllNaPredictions) {
  const std::vector<PredictionRecord> records = {record(1, 0), record(2, 0), record(0, 0)};
  EXPECT_EQ(sentence_metrics(records).macro_f1, 0.0);
}

TEST(SentenceMetrics, OrderAndDuplicationInvariant) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> cls(0, 4);
  std::vector<PredictionRecord> records;
  for (int k = 0; k < 200; ++k) records.push_back(record(cls(rng), cls(rng), 5));
  const auto base = sentence_metrics(records);
  auto shuffled = records;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto doubled = records;
  doubled.insert(doubled.end(), records.begin(), records.end());
  EXPECT_EQ(sentence_metrics(shuffled).macro_f1, base.macro_f1);
  EXPECT_EQ(sentence_metrics(doubled).macro_f1, base.macro_f1);
  EXPECT_EQ(sentence_metrics(doubled).accuracy, base.accuracy);
}

TEST(SentenceMetrics, Errors) {
  EXPECT_THROW(sentence_metrics({}), DataError);
  auto r = record(1, 1);
  r.gold.reset();
  const std::vector<PredictionRecord> records = {r};
  EXPECT_THROW(sentence_metrics(records), DataError);
}

TEST(PredictionRecord, TiesGoToLowerIndex) {
  PredictionRecord r;
  r.probabilities = {0.2, 0.4, 0.4};
  EXPECT_EQ(r.predicted(), 1u);
}

TEST(Bags, MaxOverSentences) {
  const std::vector<PredictionRecord> records = {
      bag_record("x", "y", {0.8, 0.2}), bag_record("x", "y", {0.3, 0.7}),
      bag_record("x", "y", {0.5, 0.5})};
  const auto bags = score_bags(records);
  ASSERT_EQ(bags.scores.size(), 1u);
  EXPECT_EQ(bags.scores.at({"x", "y"})[1], 0.7);
  EXPECT_EQ(bags.scores.at({"x", "y"})[0], 0.8);
}

TEST(Bags, SingleSentenceAndMissingIds) {
  auto unlinked = record(1, 1);
  const std::vector<PredictionRecord> records = {bag_record("a", "b", {0.1, 0.6, 0.3}), unlinked};
  const auto bags = score_bags(records);
  EXPECT_EQ(bags.scores.at({"a", "b"}), (std::vector<double>{0.1, 0.6, 0.3}));
  EXPECT_EQ(bags.excluded_records, 1u);
}

TEST(Bags, AddingSentencesNeverLowersScores) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<PredictionRecord> records;
  const char* ents[] = {"p", "q", "r"};
  for (int k = 0; k < 60; ++k) {
    records.push_back(bag_record(ents[k % 3], ents[(k / 3) % 3], {u(rng), u(rng), u(rng)}));
    const auto before = score_bags(std::span(records).first(records.size() - 1));
    const auto after = score_bags(records);
    for (const auto& [key, scores] : before.scores) {
      for (std::size_t c = 0; c < scores.size(); ++c) EXPECT_GE(after.scores.at(key)[c], scores[c]);
    }
  }
}

std::vector<RankedFact> ranking(const std::vector<bool>& correct) {
  std::vector<RankedFact> out;
  for (std::size_t k = 0; k < correct.size(); ++k) {
    out.push_back({Fact{{"s" + std::to_string(k), "o"}, 1},
                   1.0 - static_cast<double>(k) / 1000.0, static_cast<bool>(correct[k])});
  }
  return out;
}

TEST(PrecisionAtK, Examples) {
  std::vector<bool> flags(40, false);
  flags[0] = true;
  EXPECT_EQ(precision_at_k_percent(ranking(flags), 5), 0.5);
  flags[1] = true;
  EXPECT_EQ(precision_at_k_percent(ranking(flags), 5), 1.0);
  std::vector<bool> mixed(37);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < mixed.size(); ++k) {
    mixed[k] = k % 3 != 1;
    hits += mixed[k];
  }
  EXPECT_DOUBLE_EQ(precision_at_k_percent(ranking(mixed), 100),
                   static_cast<double>(hits) / 37.0);
  EXPECT_THROW(precision_at_k_percent(ranking(flags), 0), ConfigError);
  EXPECT_THROW(precision_at_k_percent(ranking(flags), 101), ConfigError);
}

TEST(PrecisionAtK, GoldSizePopulation) {
  std::vector<bool> flags(40, false);
  flags[0] = flags[1] = flags[2] = true;
  // 5% of 20 gold facts is one fact.
  EXPECT_EQ(precision_at_k_percent(ranking(flags), 5, Population::kGoldSize, 20), 1.0);
  EXPECT_EQ(parse_population(population_name(Population::kGoldSize)), Population::kGoldSize);
}

TEST(RankFacts, ScoresTieBreakAndFloor) {
  const std::vector<PredictionRecord> records = {
      bag_record("b", "c", {0.2, 0.4, 0.4}, 1), bag_record("a", "c", {0.2, 0.4, 0.4}, 2)};
  const auto gold = gold_facts(records);
  const auto ranked = rank_facts(score_bags(records), gold);
  ASSERT_EQ(ranked.size(), 4u);
  EXPECT_EQ(ranked[0].fact, (Fact{{"a", "c"}, 1}));
  EXPECT_FALSE(ranked[0].correct);
  EXPECT_EQ(ranked[1].fact, (Fact{{"a", "c"}, 2}));
  EXPECT_TRUE(ranked[1].correct);
  EXPECT_EQ(rank_facts(score_bags(records), gold, 0.4).size(), 0u);
}

TEST(PrCurve, PerfectRankingAndFinalRecall) {
  const auto ranked = ranking({true, true, true, false, false});
  const auto points = pr_curve_points(ranked, 4);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(points[k].precision, 1.0);
  EXPECT_EQ(points.back().recall, 3.0 / 4.0);
  EXPECT_EQ(points.front().precision, ranked.front().correct ? 1.0 : 0.0);
  for (std::size_t k = 1; k < points.size(); ++k) EXPECT_GE(points[k].recall, points[k - 1].recall);
  EXPECT_THROW(pr_curve_points(ranked, 0), DataError);
  std::ostringstream csv;
  write_pr_csv(csv, points);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "rank,score,correct,precision,recall");
}

TEST(PrCurve, RandomScorerAreaMatchesPrevalence) {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> logit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> rel(1, 5);
    std::vector<PredictionRecord> records;
    for (int b = 0; b < 400; ++b) {
      std::vector<double> logits(6);
      for (double& l : logits) l = logit(rng);
      records.push_back(bag_record("s" + std::to_string(b), "o", ad::softmax(logits), rel(rng)));
    }
    const auto gold = gold_facts(records);
    const auto ranked = rank_facts(score_bags(records), gold);
    const double prevalence = static_cast<double>(gold.size()) / static_cast<double>(ranked.size());
    const double area = pr_area(pr_curve_points(ranked, gold.size()));
    EXPECT_NEAR(area, prevalence, 0.05) << "seed " << seed;
    total += area - prevalence;
  }
  EXPECT_NEAR(total / 5.0, 0.0, 0.05);
}

TEST(Report, FieldsAndDeterminism) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.01, 1);
  std::vector<PredictionRecord> records;
  for (int k = 0; k < 30; ++k) {
    std::vector<double> p = {u(rng), u(rng), u(rng)};
    const double sum = p[0] + p[1] + p[2];
    for (double& v : p) v /= sum;
    records.push_back(bag_record("e" + std::to_string(k % 7), "f", p, static_cast<std::size_t>(k % 3)));
  }
  const std::string a = metrics_report_json(records);
  EXPECT_EQ(a, metrics_report_json(records));
  const auto j = nlohmann::json::parse(a);
  for (const char* key : {"accuracy", "macro_f1", "p_at", "pr_auc", "counts", "decisions"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["p_at"].size(), 4u);
  EXPECT_EQ(j["decisions"]["population"], "predictions");
}

TEST(Predictions, WriteReadRoundTrip) {
  const RelationVocab relations({kNoRelation, "A", "B"});
  std::vector<PredictionRecord> records = {bag_record("x", "y", {0.25, 0.5, 0.25}, 1),
                                           record(2, 0)};
  records[1].subject = 1;
  std::stringstream io;
  write_predictions(io, records, relations);
  const auto back = read_predictions(io, relations);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].probabilities, records[0].probabilities);
  EXPECT_EQ(back[0].subject_kb, "x");
  EXPECT_EQ(back[1].gold, 2u);
  EXPECT_EQ(back[1].subject, 1u);
  EXPECT_FALSE(back[1].subject_kb.has_value());
}

}  // namespace
}  // namespace gpgnn::eval
