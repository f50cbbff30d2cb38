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

#include "gpgnn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"

namespace gpgnn::corpus {
namespace {

using nlohmann::json;

constexpr const char* kPadToken = "<pad>";
constexpr const char* kUnknownToken = "<unk>";

std::size_t get_index(const json& obj, const char* key, const char* what) {
  if (!obj.contains(key)) {
    throw DataError(std::string(what) + " is missing \"" + key + "\"");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw DataError(std::string(what) + " field \"" + key +
                    "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

Provenance parse_provenance(const std::string& s) {
  if (s == "gold") return Provenance::kGold;
  if (s == "reversed") return Provenance::kReversed;
  if (s == "na-filled") return Provenance::kNaFilled;
  throw DataError("unknown provenance '" + s + "'");
}

// Disjoint-set forest used for cycle detection.
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kGold:
      return "gold";
    case Provenance::kReversed:
      return "reversed";
    case Provenance::kNaFilled:
      return "na-filled";
  }
  return "gold";
}

std::string_view skip_reason_name(SkipReason r) {
  switch (r) {
    case SkipReason::kTooFewEntities:
      return "too_few_entities";
    case SkipReason::kTooManyEntities:
      return "too_many_entities";
    case SkipReason::kOverlappingSpans:
      return "overlapping_spans";
  }
  return "unknown";
}

const RelationTriple* Sentence::find_triple(std::size_t subject,
                                            std::size_t object) const {
  for (const RelationTriple& t : triples) {
    if (t.subject == subject && t.object == object) return &t;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// JSON lines

Sentence parse_sentence(std::string_view json_line) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("sentence must be a JSON object");
  Sentence s;
  if (!j.contains("id") || !j["id"].is_string()) {
    throw DataError("sentence needs a string \"id\"");
  }
  s.id = j["id"].get<std::string>();
  if (!j.contains("tokens") || !j["tokens"].is_array() || j["tokens"].empty()) {
    throw DataError("sentence needs a non-empty \"tokens\" array");
  }
  for (const json& t : j["tokens"]) {
    if (!t.is_string()) throw DataError("tokens must be strings");
    s.tokens.push_back(t.get<std::string>());
  }
  const json entities = j.value("entities", json::array());
  if (!entities.is_array()) throw DataError("\"entities\" must be an array");
  for (const json& e : entities) {
    if (!e.is_object()) throw DataError("entity must be an object");
    EntityMention m;
    m.start = get_index(e, "start", "entity");
    m.end = get_index(e, "end", "entity");
    if (m.end <= m.start) {
      throw DataError("entity span end " + std::to_string(m.end) +
                      " <= start " + std::to_string(m.start));
    }
    if (m.end > s.tokens.size()) {
      throw DataError("entity span end " + std::to_string(m.end) +
                      " exceeds sentence length " +
                      std::to_string(s.tokens.size()));
    }
    if (e.contains("kb_id") && !e["kb_id"].is_null()) {
      if (!e["kb_id"].is_string()) throw DataError("kb_id must be a string");
      m.kb_id = e["kb_id"].get<std::string>();
    }
    s.entities.push_back(std::move(m));
  }
  const json triples = j.value("triples", json::array());
  if (!triples.is_array()) throw DataError("\"triples\" must be an array");
  for (const json& t : triples) {
    if (!t.is_object()) throw DataError("triple must be an object");
    RelationTriple r;
    r.subject = get_index(t, "s", "triple");
    r.object = get_index(t, "o", "triple");
    if (r.subject >= s.entities.size() || r.object >= s.entities.size()) {
      throw DataError("triple refers to entity " +
                      std::to_string(std::max(r.subject, r.object)) + " of " +
                      std::to_string(s.entities.size()));
    }
    if (!t.contains("r") || !t["r"].is_string() ||
        t["r"].get<std::string>().empty()) {
      throw DataError("triple needs a non-empty relation \"r\"");
    }
    r.relation = t["r"].get<std::string>();
    if (t.contains("p")) r.provenance = parse_provenance(t["p"].get<std::string>());
    s.triples.push_back(std::move(r));
  }
  return s;
}

std::string serialize_sentence(const Sentence& s) {
  json j;
  j["id"] = s.id;
  j["tokens"] = s.tokens;
  json entities = json::array();
  for (const EntityMention& e : s.entities) {
    json ej = {{"start", e.start}, {"end", e.end}};
    if (e.kb_id) ej["kb_id"] = *e.kb_id;
    entities.push_back(std::move(ej));
  }
  j["entities"] = std::move(entities);
  json triples = json::array();
  for (const RelationTriple& t : s.triples) {
    json tj = {{"s", t.subject}, {"o", t.object}, {"r", t.relation}};
    if (t.provenance != Provenance::kGold) {
      tj["p"] = std::string(provenance_name(t.provenance));
    }
    triples.push_back(std::move(tj));
  }
  j["triples"] = std::move(triples);
  return j.dump();
}

ParseResult parse_corpus(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      result.sentences.push_back(parse_sentence(line));
    } catch (const DataError& e) {
      result.errors.push_back({number, e.what()});
    }
  }
  return result;
}

ParseResult parse_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus_file(const std::filesystem::path& path,
                       std::span<const Sentence> sentences) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Sentence& s : sentences) out << serialize_sentence(s) << '\n';
}

// ---------------------------------------------------------------------------
// Normalization

NormalizeOutcome normalize_sentence(const Sentence& input,
                                    const InverseMap& inverses,
                                    const RelationVocab* vocab) {
  NormalizeOutcome outcome;
  Sentence s;
  s.id = input.id;
  s.tokens = input.tokens;

  // Entities sharing a span collapse onto the first occurrence.
  std::vector<std::size_t> remap(input.entities.size());
  for (std::size_t k = 0; k < input.entities.size(); ++k) {
    const EntityMention& e = input.entities[k];
    auto same = std::find_if(s.entities.begin(), s.entities.end(),
                             [&](const EntityMention& kept) {
                               return kept.start == e.start && kept.end == e.end;
                             });
    if (same != s.entities.end()) {
      if (!same->kb_id && e.kb_id) same->kb_id = e.kb_id;
      remap[k] = static_cast<std::size_t>(same - s.entities.begin());
      ++outcome.merged_entities;
    } else {
      remap[k] = s.entities.size();
      s.entities.push_back(e);
    }
  }
  for (std::size_t a = 0; a < s.entities.size(); ++a) {
    for (std::size_t b = a + 1; b < s.entities.size(); ++b) {
      const EntityMention& x = s.entities[a];
      const EntityMention& y = s.entities[b];
      if (x.start < y.end && y.start < x.end) {
        outcome.skipped = SkipReason::kOverlappingSpans;
        return outcome;
      }
    }
  }
  const std::size_t m = s.entities.size();
  if (m < 2) {
    outcome.skipped = SkipReason::kTooFewEntities;
    return outcome;
  }
  if (m > kMaxEntities) {
    outcome.skipped = SkipReason::kTooManyEntities;
    return outcome;
  }

  // assigned[a * m + b] -> index into s.triples.
  std::vector<std::optional<std::size_t>> assigned(m * m);
  for (const RelationTriple& t : input.triples) {
    if (vocab != nullptr && !vocab->contains(t.relation)) {
      throw DataError("sentence " + input.id + ": relation '" + t.relation +
                      "' is not in the vocabulary");
    }
    const std::size_t a = remap.at(t.subject);
    const std::size_t b = remap.at(t.object);
    if (a == b) {
      ++outcome.dropped_self_loops;
      continue;
    }
    auto& slot = assigned[a * m + b];
    if (slot) {
      if (s.triples[*slot].relation != t.relation) ++outcome.dropped_conflicts;
      continue;
    }
    slot = s.triples.size();
    s.triples.push_back({a, b, t.relation, t.provenance});
  }

  const std::size_t labelled = s.triples.size();
  for (std::size_t k = 0; k < labelled; ++k) {
    const RelationTriple t = s.triples[k];
    if (t.relation == kNoRelation) continue;
    auto inv = inverses.find(t.relation);
    if (inv == inverses.end()) continue;
    auto& slot = assigned[t.object * m + t.subject];
    if (slot) continue;
    if (vocab != nullptr && !vocab->contains(inv->second)) {
      throw DataError("sentence " + input.id + ": inverse relation '" +
                      inv->second + "' is not in the vocabulary");
    }
    slot = s.triples.size();
    s.triples.push_back({t.object, t.subject, inv->second, Provenance::kReversed});
    ++outcome.added_reversed;
  }

  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b || assigned[a * m + b]) continue;
      assigned[a * m + b] = s.triples.size();
      s.triples.push_back({a, b, kNoRelation, Provenance::kNaFilled});
      ++outcome.added_na;
    }
  }
  std::sort(s.triples.begin(), s.triples.end(),
            [](const RelationTriple& x, const RelationTriple& y) {
              return std::tie(x.subject, x.object) < std::tie(y.subject, y.object);
            });
  outcome.sentence = std::move(s);
  return outcome;
}

std::size_t NormalizationStats::skipped_total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : skipped) n += c;
  return n;
}

std::vector<Sentence> normalize_dataset(std::span<const Sentence> sentences,
                                        const InverseMap& inverses,
                                        const RelationVocab* vocab,
                                        NormalizationStats& stats) {
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (const Sentence& s : sentences) {
    ++stats.input;
    NormalizeOutcome r = normalize_sentence(s, inverses, vocab);
    stats.merged_entities += r.merged_entities;
    stats.dropped_self_loops += r.dropped_self_loops;
    stats.dropped_conflicts += r.dropped_conflicts;
    stats.added_reversed += r.added_reversed;
    stats.added_na += r.added_na;
    if (r.skipped) {
      ++stats.skipped[std::string(skip_reason_name(*r.skipped))];
      continue;
    }
    ++stats.kept;
    out.push_back(std::move(*r.sentence));
  }
  return out;
}

bool is_dense(const Sentence& sentence) {
  const std::size_t m = sentence.entity_count();
  if (m <= 2) return false;
  // Undirected simple graph: (a, b) and (b, a) are one edge, so any cycle
  // found has length >= 3.
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const RelationTriple& t : sentence.triples) {
    if (t.relation == kNoRelation || t.subject == t.object) continue;
    edges.emplace(std::min(t.subject, t.object), std::max(t.subject, t.object));
  }
  UnionFind uf(m);
  for (const auto& [a, b] : edges) {
    if (!uf.unite(a, b)) return true;
  }
  return false;
}

DenseSplit split_dense_subset(std::span<const Sentence> sentences) {
  DenseSplit split;
  for (const Sentence& s : sentences) {
    (is_dense(s) ? split.dense : split.rest).push_back(s);
  }
  return split;
}

RelationVocab relation_vocab_from(std::span<const Sentence> sentences,
                                  const InverseMap& inverses) {
  std::set<std::string> seen;
  for (const Sentence& s : sentences) {
    for (const RelationTriple& t : s.triples) {
      if (t.relation != kNoRelation) seen.insert(t.relation);
    }
  }
  for (const auto& [r, inv] : inverses) {
    if (seen.contains(r)) seen.insert(inv);
  }
  std::vector<std::string> names{kNoRelation};
  names.insert(names.end(), seen.begin(), seen.end());
  return RelationVocab(std::move(names), inverses);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_ = {kPadToken, kUnknownToken};
  index_.emplace(kPadToken, 0);
  index_.emplace(kUnknownToken, 1);
  for (std::string& t : tokens) {
    if (t == kPadToken || t == kUnknownToken) continue;
    std::string folded = fold(t);
    if (index_.emplace(folded, tokens_.size()).second) {
      tokens_.push_back(std::move(folded));
    }
  }
}

Vocabulary Vocabulary::build(std::span<const Sentence> sentences) {
  std::set<std::string> seen;
  for (const Sentence& s : sentences) {
    for (const std::string& t : s.tokens) seen.insert(fold(t));
  }
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

std::string Vocabulary::fold(std::string_view token) {
  std::string out(token);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(fold(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index(std::string_view token) const {
  return find(token).value_or(1);
}

}  // namespace gpgnn::corpus
