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

// Synthetic multi-hop corpora. Every sentence contains one premise chain
// A -r1-> B -r2-> C whose relation pair has a composition rule, so the gold
// labels also hold the implied A -r3-> C. The surface text states only the
// premises. Extra entities form isolated decoy edges.
//
// Two surface styles are available:
//   inline  "A verb0 B verb1 C ; D verb2 E"
//   linked  "A verb0 l3 , B l3 verb1 l5 , C l5 , ..."
// In the linked style a premise edge is visible only as a link token shared
// by the two entity groups, with the relation word on the head side.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpgnn/corpus.hpp"
#include "gpgnn/relations.hpp"

namespace gpgnn::synth {

struct CompositionRule {
  std::string first;
  std::string second;
  std::string implied;

  bool operator==(const CompositionRule&) const = default;
};

enum class SurfaceStyle { kInline, kLinked };

struct SynthSpec {
  /// Entity symbols per split pool.
  std::size_t n_entities = 60;
  /// Premise relations rel0 .. rel{n-1}.
  std::size_t n_relations = 3;
  std::size_t n_sentences = 50;
  std::size_t valid_sentences = 0;
  std::size_t test_sentences = 0;
  /// Empty means rel{i} o rel{i+1 mod n} -> comp{i}.
  std::vector<CompositionRule> rules;
  std::size_t min_entities = 3;
  std::size_t max_entities = 3;
  SurfaceStyle style = SurfaceStyle::kInline;
  /// Size of the link-token pool for the linked style.
  std::size_t link_tokens = 8;
  /// Probability of a filler word between clauses.
  double filler_rate = 0.0;
  std::uint64_t seed = 7;

  /// Throws ConfigError on an inconsistent rule set or impossible sizes.
  void validate() const;
  std::vector<CompositionRule> effective_rules() const;
  std::vector<std::string> premise_relations() const;

  static SynthSpec from_json(const std::string& text);
  std::string to_json() const;
};

struct SynthCorpus {
  std::vector<corpus::Sentence> train;
  std::vector<corpus::Sentence> valid;
  std::vector<corpus::Sentence> test;
  InverseMap inverses;
  RelationVocab relations;
  /// Implied relations and their inverses.
  std::vector<std::string> implied_relations;
};

/// Deterministic in spec.seed. Triples hold the forward gold facts only;
/// reversed and NA triples come from normalization.
SynthCorpus synthesize_multihop_corpus(const SynthSpec& spec);

/// train.jsonl, valid.jsonl, test.jsonl, inverse.json, relations.json and
/// implied.json under `dir`.
void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace gpgnn::synth
