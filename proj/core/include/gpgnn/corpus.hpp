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

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gpgnn/relations.hpp"

namespace gpgnn::corpus {

/// Entities allowed per sentence after normalization.
inline constexpr std::size_t kMaxEntities = 9;

enum class Provenance { kGold, kReversed, kNaFilled };
std::string_view provenance_name(Provenance p);

/// Token span [start, end).
struct EntityMention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::string> kb_id;

  bool operator==(const EntityMention&) const = default;
};

struct RelationTriple {
  std::size_t subject = 0;
  std::size_t object = 0;
  std::string relation;
  Provenance provenance = Provenance::kGold;

  bool operator==(const RelationTriple&) const = default;
};

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<EntityMention> entities;
  std::vector<RelationTriple> triples;

  std::size_t entity_count() const { return entities.size(); }
  /// Triple for the ordered pair, if any.
  const RelationTriple* find_triple(std::size_t subject, std::size_t object) const;

  bool operator==(const Sentence&) const = default;
};

// ---------------------------------------------------------------------------
// Line-delimited JSON corpus files.

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<Sentence> sentences;
  std::vector<LineError> errors;
};

/// Parses one JSON sentence object; throws DataError on schema violations.
Sentence parse_sentence(std::string_view json_line);
std::string serialize_sentence(const Sentence& sentence);

ParseResult parse_corpus(std::istream& in);
/// Throws DataError if the file cannot be read; bad lines are collected.
ParseResult parse_corpus_file(const std::filesystem::path& path);
void write_corpus_file(const std::filesystem::path& path,
                       std::span<const Sentence> sentences);

// ---------------------------------------------------------------------------
// Normalization.

enum class SkipReason { kTooFewEntities, kTooManyEntities, kOverlappingSpans };
std::string_view skip_reason_name(SkipReason r);

struct NormalizeOutcome {
  std::optional<Sentence> sentence;
  std::optional<SkipReason> skipped;
  std::size_t merged_entities = 0;
  std::size_t dropped_self_loops = 0;
  std::size_t dropped_conflicts = 0;
  std::size_t added_reversed = 0;
  std::size_t added_na = 0;
};

/// Merges identical spans, drops self-loops and conflicting duplicate
/// labels, adds missing reversed triples, NA-fills the remaining ordered
/// pairs and sorts triples by (subject, object). Sentences with fewer than
/// 2 or more than kMaxEntities entities, or with partially overlapping
/// spans, are skipped. With `vocab`, unknown relations raise DataError.
NormalizeOutcome normalize_sentence(const Sentence& sentence,
                                    const InverseMap& inverses,
                                    const RelationVocab* vocab = nullptr);

struct NormalizationStats {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> skipped;
  std::size_t merged_entities = 0;
  std::size_t dropped_self_loops = 0;
  std::size_t dropped_conflicts = 0;
  std::size_t added_reversed = 0;
  std::size_t added_na = 0;

  std::size_t skipped_total() const;
};

std::vector<Sentence> normalize_dataset(std::span<const Sentence> sentences,
                                        const InverseMap& inverses,
                                        const RelationVocab* vocab,
                                        NormalizationStats& stats);

/// More than two entities and a cycle (length >= 3) among the undirected
/// non-NA relation edges.
bool is_dense(const Sentence& sentence);

struct DenseSplit {
  std::vector<Sentence> dense;
  std::vector<Sentence> rest;
};

DenseSplit split_dense_subset(std::span<const Sentence> sentences);

/// NA first, then every other relation seen in the data, sorted.
RelationVocab relation_vocab_from(std::span<const Sentence> sentences,
                                  const InverseMap& inverses = {});

// ---------------------------------------------------------------------------

/// Case-folded token vocabulary. Row 0 is padding, row 1 the unknown token.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary build(std::span<const Sentence> sentences);
  static std::string fold(std::string_view token);

  std::size_t size() const { return tokens_.size(); }
  /// Folded lookup; unseen tokens map to the unknown row.
  std::size_t index(std::string_view token) const;
  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gpgnn::corpus
