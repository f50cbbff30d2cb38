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

#include "gpgnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"

namespace gpgnn::eval {

using nlohmann::json;

std::size_t PredictionRecord::predicted() const {
  if (probabilities.empty()) throw DataError("record " + sentence_id + " has no scores");
  return static_cast<std::size_t>(
      std::max_element(probabilities.begin(), probabilities.end()) -
      probabilities.begin());
}

std::vector<PredictionRecord> predict_records(
    const model::GpGnnModel& model, std::span<const model::EncodedSentence> sentences) {
  std::vector<PredictionRecord> out;
  for (const model::EncodedSentence& s : sentences) {
    auto probs = model.predict(s);
    for (std::size_t e = 0; e < s.graph.edges.size(); ++e) {
      const auto [i, j] = s.graph.edges[e];
      PredictionRecord r;
      r.sentence_id = s.id;
      r.subject = i;
      r.object = j;
      r.subject_kb = s.entities[i].kb_id;
      r.object_kb = s.entities[j].kb_id;
      r.probabilities = std::move(probs[e]);
      if (!s.labels.empty()) r.gold = s.labels[e];
      out.push_back(std::move(r));
    }
  }
  return out;
}

SentenceMetrics sentence_metrics(std::span<const PredictionRecord> records) {
  if (records.empty()) throw DataError("sentence_metrics: empty record set");
  std::map<std::size_t, std::size_t> tp, fp, fn;
  std::size_t correct = 0;
  for (const PredictionRecord& r : records) {
    if (!r.gold) {
      throw DataError("sentence_metrics: record of " + r.sentence_id + " has no gold label");
    }
    const std::size_t gold = *r.gold;
    const std::size_t pred = r.predicted();
    if (pred == gold) {
      ++correct;
      ++tp[gold];
    } else {
      ++fp[pred];
      ++fn[gold];
    }
  }
  std::set<std::size_t> classes;
  for (const auto* counts : {&tp, &fp, &fn}) {
    for (const auto& [c, n] : *counts) {
      if (c != kNoRelationIndex && n > 0) classes.insert(c);
    }
  }
  double f1_sum = 0.0;
  for (std::size_t c : classes) {
    const double t = static_cast<double>(tp[c]);
    f1_sum += 2.0 * t / (2.0 * t + static_cast<double>(fp[c] + fn[c]));
  }
  SentenceMetrics m;
  m.records = records.size();
  m.classes = classes.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  m.macro_f1 = classes.empty() ? 0.0 : f1_sum / static_cast<double>(classes.size());
  return m;
}

BagScores score_bags(std::span<const PredictionRecord> records) {
  BagScores bags;
  for (const PredictionRecord& r : records) {
    if (!r.subject_kb || !r.object_kb) {
      ++bags.excluded_records;
      continue;
    }
    auto [it, inserted] = bags.scores.try_emplace(BagKey{*r.subject_kb, *r.object_kb},
                                                  r.probabilities);
    if (inserted) continue;
    auto& best = it->second;
    if (best.size() != r.probabilities.size()) {
      throw DataError("score_bags: records disagree on the number of relations");
    }
    for (std::size_t c = 0; c < best.size(); ++c) {
      best[c] = std::max(best[c], r.probabilities[c]);
    }
  }
  return bags;
}

std::set<Fact> gold_facts(std::span<const PredictionRecord> records) {
  std::set<Fact> facts;
  for (const PredictionRecord& r : records) {
    if (r.subject_kb && r.object_kb && r.gold && *r.gold != kNoRelationIndex) {
      facts.insert({{*r.subject_kb, *r.object_kb}, *r.gold});
    }
  }
  return facts;
}

std::vector<RankedFact> rank_facts(const BagScores& bags, const std::set<Fact>& gold,
                                   double na_floor) {
  std::vector<RankedFact> ranked;
  for (const auto& [key, scores] : bags.scores) {
    for (std::size_t c = 0; c < scores.size(); ++c) {
      if (c == kNoRelationIndex || !(scores[c] > na_floor)) continue;
      Fact f{key, c};
      const bool correct = gold.contains(f);
      ranked.push_back({std::move(f), scores[c], correct});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedFact& a, const RankedFact& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fact < b.fact;
  });
  return ranked;
}

std::string population_name(Population p) {
  return p == Population::kPredictions ? "predictions" : "gold-size";
}

Population parse_population(const std::string& name) {
  if (name == "predictions") return Population::kPredictions;
  if (name == "gold-size") return Population::kGoldSize;
  throw ConfigError("population must be 'predictions' or 'gold-size', got '" + name + "'");
}

double precision_at_k_percent(std::span<const RankedFact> ranked, double k,
                              Population population, std::size_t gold_count) {
  if (!(k > 0.0 && k <= 100.0)) {
    throw ConfigError("P@K%: k must lie in (0, 100], got " + std::to_string(k));
  }
  const std::size_t base =
      population == Population::kPredictions ? ranked.size() : gold_count;
  const auto top = std::min(
      ranked.size(),
      static_cast<std::size_t>(std::ceil(k * static_cast<double>(base) / 100.0)));
  if (top == 0) return 0.0;
  const auto hits = std::count_if(ranked.begin(), ranked.begin() + top,
                                  [](const RankedFact& f) { return f.correct; });
  return static_cast<double>(hits) / static_cast<double>(top);
}

std::vector<PrPoint> pr_curve_points(std::span<const RankedFact> ranked,
                                     std::size_t gold_count) {
  if (gold_count == 0) throw DataError("PR curve: no gold facts, recall is undefined");
  std::vector<PrPoint> points;
  points.reserve(ranked.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (ranked[r].correct) ++hits;
    points.push_back({r + 1, ranked[r].score, ranked[r].correct,
                      static_cast<double>(hits) / static_cast<double>(r + 1),
                      static_cast<double>(hits) / static_cast<double>(gold_count)});
  }
  return points;
}

double pr_area(std::span<const PrPoint> points) {
  double area = 0.0;
  double recall = 0.0;
  for (const PrPoint& p : points) {
    area += p.precision * (p.recall - recall);
    recall = p.recall;
  }
  return area;
}

void write_pr_csv(std::ostream& out, std::span<const PrPoint> points) {
  out << "rank,score,correct,precision,recall\n";
  for (const PrPoint& p : points) {
    out << p.rank << ',' << json(p.score).dump() << ',' << (p.correct ? 1 : 0) << ','
        << json(p.precision).dump() << ',' << json(p.recall).dump() << '\n';
  }
}

std::string metrics_report_json(std::span<const PredictionRecord> records,
                                 const EvalOptions& options) {
  const SentenceMetrics sm = sentence_metrics(records);
  const BagScores bags = score_bags(records);
  const auto gold = gold_facts(records);
  const auto ranked = rank_facts(bags, gold, options.na_floor);

  json p_at = json::object();
  json pr_auc = nullptr;
  if (!bags.scores.empty() && !gold.empty()) {
    for (double k : options.p_at) {
      p_at[json(k).dump()] =
          precision_at_k_percent(ranked, k, options.population, gold.size());
    }
    const auto points = pr_curve_points(ranked, gold.size());
    pr_auc = pr_area(points);
  } else {
    for (double k : options.p_at) p_at[json(k).dump()] = nullptr;
  }
  json report = {
      {"accuracy", sm.accuracy},
      {"macro_f1", sm.macro_f1},
      {"p_at", p_at},
      {"pr_auc", pr_auc},
      {"counts",
       {{"records", sm.records},
        {"macro_f1_classes", sm.classes},
        {"bags", bags.scores.size()},
        {"records_without_kb_id", bags.excluded_records},
        {"gold_facts", gold.size()},
        {"ranked_facts", ranked.size()}}},
      {"decisions",
       {{"accuracy_includes_na", true},
        {"macro_f1_excludes_na", true},
        {"bag_aggregation", "max"},
        {"population", population_name(options.population)},
        {"na_floor", options.na_floor},
        {"tie_break", "bag key, relation index"}}}};
  return report.dump(2);
}

void write_predictions(std::ostream& out, std::span<const PredictionRecord> records,
                       const RelationVocab& relations) {
  for (const PredictionRecord& r : records) {
    if (r.probabilities.size() != relations.size()) {
      throw DataError("prediction for " + r.sentence_id + " has " +
                      std::to_string(r.probabilities.size()) + " scores, expected " +
                      std::to_string(relations.size()));
    }
    json j = {{"id", r.sentence_id},
              {"s", r.subject},
              {"o", r.object},
              {"s_kb", r.subject_kb ? json(*r.subject_kb) : json(nullptr)},
              {"o_kb", r.object_kb ? json(*r.object_kb) : json(nullptr)},
              {"pred", relations.name(r.predicted())},
              {"probs", r.probabilities},
              {"gold", r.gold ? json(relations.name(*r.gold)) : json(nullptr)}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in,
                                               const RelationVocab& relations) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord r;
      r.sentence_id = j.at("id").get<std::string>();
      r.subject = j.at("s").get<std::size_t>();
      r.object = j.at("o").get<std::size_t>();
      if (j.contains("s_kb") && !j["s_kb"].is_null()) r.subject_kb = j["s_kb"].get<std::string>();
      if (j.contains("o_kb") && !j["o_kb"].is_null()) r.object_kb = j["o_kb"].get<std::string>();
      r.probabilities = j.at("probs").get<std::vector<double>>();
      if (r.probabilities.size() != relations.size()) {
        throw DataError("expected " + std::to_string(relations.size()) + " scores");
      }
      if (j.contains("gold") && !j["gold"].is_null()) {
        r.gold = relations.index(j["gold"].get<std::string>());
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gpgnn::eval
