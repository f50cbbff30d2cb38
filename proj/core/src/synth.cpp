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

#include "gpgnn/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"
#include "gpgnn/random.hpp"

namespace gpgnn::synth {
namespace {

using nlohmann::json;

constexpr const char* kFillers[] = {"and", "also", "then", "while"};

std::string inverse_name(const std::string& name) { return name + "_inv"; }

struct PremiseEdge {
  std::size_t head;
  std::size_t tail;
  std::size_t relation;  // index into premise relations
};

struct SentencePlan {
  std::size_t entities = 0;
  std::vector<PremiseEdge> edges;
  std::size_t rule = 0;
};

SentencePlan plan_sentence(const SynthSpec& spec,
                           const std::vector<CompositionRule>& rules,
                           const std::map<std::string, std::size_t>& premise_index,
                           Rng& rng) {
  SentencePlan plan;
  std::uniform_int_distribution<std::size_t> size(spec.min_entities, spec.max_entities);
  plan.entities = size(rng);
  std::uniform_int_distribution<std::size_t> pick_rule(0, rules.size() - 1);
  plan.rule = pick_rule(rng);
  const CompositionRule& rule = rules[plan.rule];
  // Entities 0, 1, 2 form the chain; the rest pair up into decoy edges that
  // reuse the chain's relations so that relation words alone do not reveal
  // which pairs compose.
  plan.edges.push_back({0, 1, premise_index.at(rule.first)});
  plan.edges.push_back({1, 2, premise_index.at(rule.second)});
  std::uniform_int_distribution<std::size_t> pick_rel(0, spec.n_relations - 1);
  std::size_t decoy = 0;
  for (std::size_t e = 3; e + 1 < plan.entities; e += 2, ++decoy) {
    std::size_t relation;
    if (decoy == 0) {
      relation = premise_index.at(rule.second);
    } else if (decoy == 1) {
      relation = premise_index.at(rule.first);
    } else {
      relation = pick_rel(rng);
    }
    plan.edges.push_back({e, e + 1, relation});
  }
  return plan;
}

std::vector<std::size_t> sample_symbols(std::size_t pool, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(pool);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  return all;
}

void maybe_filler(const SynthSpec& spec, std::vector<std::string>& tokens, Rng& rng) {
  if (spec.filler_rate <= 0.0) return;
  std::bernoulli_distribution coin(spec.filler_rate);
  if (coin(rng)) {
    std::uniform_int_distribution<std::size_t> pick(0, std::size(kFillers) - 1);
    tokens.emplace_back(kFillers[pick(rng)]);
  }
}

// Renders the plan; fills `mention` with the token index of each entity.
std::vector<std::string> render(const SynthSpec& spec, const SentencePlan& plan,
                                const std::vector<std::string>& symbols,
                                std::vector<std::size_t>& mention, Rng& rng) {
  std::vector<std::string> tokens;
  mention.assign(plan.entities, 0);
  auto verb = [](std::size_t relation) { return "verb" + std::to_string(relation); };

  if (spec.style == SurfaceStyle::kInline) {
    // Clause 0 is the chain, the rest are single decoy edges.
    std::vector<std::size_t> order(1 + plan.edges.size() - 2);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> placed(plan.entities, false);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0) {
        maybe_filler(spec, tokens, rng);
        tokens.emplace_back(";");
      }
      auto put_entity = [&](std::size_t e) {
        mention[e] = tokens.size();
        placed[e] = true;
        tokens.push_back(symbols[e]);
      };
      if (order[k] == 0) {
        put_entity(0);
        tokens.push_back(verb(plan.edges[0].relation));
        put_entity(1);
        tokens.push_back(verb(plan.edges[1].relation));
        put_entity(2);
      } else {
        const PremiseEdge& edge = plan.edges[order[k] + 1];
        put_entity(edge.head);
        tokens.push_back(verb(edge.relation));
        put_entity(edge.tail);
      }
    }
    // An odd entity count leaves one isolated entity.
    for (std::size_t e = 0; e < plan.entities; ++e) {
      if (!placed[e]) {
        tokens.emplace_back(";");
        mention[e] = tokens.size();
        tokens.push_back(symbols[e]);
      }
    }
    return tokens;
  }

  const auto links = sample_symbols(spec.link_tokens, plan.edges.size(), rng);
  std::vector<std::vector<std::vector<std::string>>> groups(plan.entities);
  for (std::size_t k = 0; k < plan.edges.size(); ++k) {
    const PremiseEdge& edge = plan.edges[k];
    const std::string link = "l" + std::to_string(links[k]);
    groups[edge.head].push_back({verb(edge.relation), link});
    groups[edge.tail].push_back({link});
  }
  std::vector<std::size_t> order(plan.entities);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t e = order[k];
    if (k > 0) {
      maybe_filler(spec, tokens, rng);
      tokens.emplace_back(",");
    }
    mention[e] = tokens.size();
    tokens.push_back(symbols[e]);
    auto& annotations = groups[e];
    std::shuffle(annotations.begin(), annotations.end(), rng);
    for (const auto& a : annotations) tokens.insert(tokens.end(), a.begin(), a.end());
  }
  return tokens;
}

std::vector<corpus::Sentence> generate_split(
    const SynthSpec& spec, const std::vector<CompositionRule>& rules,
    const std::vector<std::string>& premises,
    const std::map<std::string, std::size_t>& premise_index, std::size_t count,
    const std::string& split, const std::string& symbol_prefix) {
  Rng rng(derive_seed(spec.seed, "synth." + split));
  std::vector<corpus::Sentence> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const SentencePlan plan = plan_sentence(spec, rules, premise_index, rng);
    std::vector<std::string> symbols;
    for (std::size_t id : sample_symbols(spec.n_entities, plan.entities, rng)) {
      symbols.push_back(symbol_prefix + std::to_string(id));
    }
    std::vector<std::size_t> mention;
    corpus::Sentence s;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05zu", split.c_str(), n);
    s.id = id;
    s.tokens = render(spec, plan, symbols, mention, rng);
    for (std::size_t e = 0; e < plan.entities; ++e) {
      s.entities.push_back({mention[e], mention[e] + 1, symbols[e]});
    }
    for (const PremiseEdge& edge : plan.edges) {
      s.triples.push_back({edge.head, edge.tail, premises[edge.relation]});
    }
    s.triples.push_back({0, 2, rules[plan.rule].implied});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<std::string> SynthSpec::premise_relations() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_relations; ++i) names.push_back("rel" + std::to_string(i));
  return names;
}

std::vector<CompositionRule> SynthSpec::effective_rules() const {
  if (!rules.empty()) return rules;
  std::vector<CompositionRule> out;
  for (std::size_t i = 0; i < n_relations; ++i) {
    out.push_back({"rel" + std::to_string(i),
                   "rel" + std::to_string((i + 1) % n_relations),
                   "comp" + std::to_string(i)});
  }
  return out;
}

void SynthSpec::validate() const {
  if (n_relations == 0) throw ConfigError("synth: n_relations must be positive");
  if (min_entities < 3 || max_entities > corpus::kMaxEntities ||
      min_entities > max_entities) {
    throw ConfigError("synth: entities per sentence must satisfy 3 <= min <= max <= 9");
  }
  if (n_entities < max_entities) {
    throw ConfigError("synth: entity pool smaller than max_entities");
  }
  const std::size_t max_edges = 2 + (max_entities - 3) / 2;
  if (style == SurfaceStyle::kLinked && link_tokens < max_edges) {
    throw ConfigError("synth: need at least " + std::to_string(max_edges) +
                      " link tokens");
  }
  if (!(filler_rate >= 0.0 && filler_rate < 1.0)) {
    throw ConfigError("synth: filler_rate must lie in [0, 1)");
  }
  const auto premises = premise_relations();
  const std::set<std::string> premise_set(premises.begin(), premises.end());
  std::map<std::pair<std::string, std::string>, std::string> seen;
  for (const CompositionRule& r : effective_rules()) {
    if (!premise_set.contains(r.first) || !premise_set.contains(r.second)) {
      throw ConfigError("synth: rule " + r.first + " o " + r.second +
                        " uses an unknown premise relation");
    }
    if (premise_set.contains(r.implied) || r.implied == kNoRelation ||
        r.implied.empty()) {
      throw ConfigError("synth: implied relation '" + r.implied +
                        "' must be a new relation name");
    }
    auto [it, inserted] = seen.emplace(std::pair{r.first, r.second}, r.implied);
    if (!inserted && it->second != r.implied) {
      throw ConfigError("synth: inconsistent composition rule: " + r.first + " o " +
                        r.second + " maps to both " + it->second + " and " +
                        r.implied);
    }
  }
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec spec;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
  static const std::set<std::string> known = {
      "n_entities",    "n_relations",  "n_sentences",  "valid_sentences",
      "test_sentences", "rules",       "min_entities", "max_entities",
      "style",         "link_tokens",  "filler_rate",  "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("synth spec: unknown field '" + key + "'");
  }
  try {
    spec.n_entities = j.value("n_entities", spec.n_entities);
    spec.n_relations = j.value("n_relations", spec.n_relations);
    spec.n_sentences = j.value("n_sentences", spec.n_sentences);
    spec.valid_sentences = j.value("valid_sentences", spec.valid_sentences);
    spec.test_sentences = j.value("test_sentences", spec.test_sentences);
    spec.min_entities = j.value("min_entities", spec.min_entities);
    spec.max_entities = j.value("max_entities", spec.max_entities);
    spec.link_tokens = j.value("link_tokens", spec.link_tokens);
    spec.filler_rate = j.value("filler_rate", spec.filler_rate);
    spec.seed = j.value("seed", spec.seed);
    const std::string style = j.value("style", std::string("inline"));
    if (style == "inline") {
      spec.style = SurfaceStyle::kInline;
    } else if (style == "linked") {
      spec.style = SurfaceStyle::kLinked;
    } else {
      throw ConfigError("synth spec: style must be 'inline' or 'linked'");
    }
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) {
        spec.rules.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>(),
                              r.at(2).get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string SynthSpec::to_json() const {
  json rules_json = json::array();
  for (const auto& r : effective_rules()) rules_json.push_back({r.first, r.second, r.implied});
  json j = {{"n_entities", n_entities},
            {"n_relations", n_relations},
            {"n_sentences", n_sentences},
            {"valid_sentences", valid_sentences},
            {"test_sentences", test_sentences},
            {"rules", rules_json},
            {"min_entities", min_entities},
            {"max_entities", max_entities},
            {"style", style == SurfaceStyle::kInline ? "inline" : "linked"},
            {"link_tokens", link_tokens},
            {"filler_rate", filler_rate},
            {"seed", seed}};
  return j.dump(2);
}

SynthCorpus synthesize_multihop_corpus(const SynthSpec& spec) {
  spec.validate();
  const auto rules = spec.effective_rules();
  const auto premises = spec.premise_relations();
  std::map<std::string, std::size_t> premise_index;
  for (std::size_t i = 0; i < premises.size(); ++i) premise_index[premises[i]] = i;

  SynthCorpus out;
  out.train = generate_split(spec, rules, premises, premise_index, spec.n_sentences,
                             "train", "e");
  out.valid = generate_split(spec, rules, premises, premise_index,
                             spec.valid_sentences, "valid", "v");
  out.test = generate_split(spec, rules, premises, premise_index,
                            spec.test_sentences, "test", "t");

  InverseMap raw;
  std::set<std::string> implied;
  for (const auto& p : premises) raw[p] = inverse_name(p);
  for (const auto& r : rules) {
    raw[r.implied] = inverse_name(r.implied);
    implied.insert(r.implied);
    implied.insert(inverse_name(r.implied));
  }
  out.inverses = close_inverse_map(raw);
  std::vector<std::string> names = {kNoRelation};
  for (const auto& [name, inverse] : out.inverses) names.push_back(name);
  out.relations = RelationVocab(std::move(names), out.inverses);
  out.implied_relations.assign(implied.begin(), implied.end());
  return out;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  corpus::write_corpus_file(dir / "train.jsonl", corpus.train);
  corpus::write_corpus_file(dir / "valid.jsonl", corpus.valid);
  corpus::write_corpus_file(dir / "test.jsonl", corpus.test);
  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    f << text << '\n';
  };
  write_text("inverse.json", inverse_map_json(corpus.inverses));
  write_text("relations.json", corpus.relations.to_json());
  write_text("implied.json", json(corpus.implied_relations).dump());
}

}  // namespace gpgnn::synth
