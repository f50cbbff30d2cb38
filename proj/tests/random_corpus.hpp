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

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gpgnn/corpus.hpp"
#include "gpgnn/random.hpp"
#include "gpgnn/relations.hpp"

namespace gpgnn::testing {

/// Relations used by random raw sentences; "knows" has no inverse.
inline InverseMap random_corpus_inverses() {
  return close_inverse_map({{"part_of", "has_member"}, {"parent_of", "child_of"}});
}

/// A raw sentence with 2..9 single-token entities and messy gold triples:
/// duplicates, conflicting labels, self-loops, repeated spans and explicit NA.
inline corpus::Sentence random_raw_sentence(Rng& rng, std::size_t index) {
  static const std::vector<std::string> relations = {"part_of", "has_member", "parent_of",
                                                     "child_of", "knows", kNoRelation};
  std::uniform_int_distribution<std::size_t> pick_m(2, 9);
  const std::size_t m = pick_m(rng);
  corpus::Sentence s;
  s.id = "r" + std::to_string(index);
  for (std::size_t e = 0; e < m; ++e) {
    s.entities.push_back({s.tokens.size(), s.tokens.size() + 1, "Q" + std::to_string(rng() % 50)});
    s.tokens.push_back("ent" + std::to_string(e));
    s.tokens.push_back("and");
  }
  std::bernoulli_distribution coin(0.15);
  if (coin(rng)) s.entities.push_back(s.entities.front());
  std::uniform_int_distribution<std::size_t> pick_e(0, s.entities.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_r(0, relations.size() - 1);
  std::uniform_int_distribution<std::size_t> count(0, 2 * m);
  const std::size_t n = count(rng);
  for (std::size_t k = 0; k < n; ++k) {
    s.triples.push_back({pick_e(rng), pick_e(rng), relations[pick_r(rng)],
                         corpus::Provenance::kGold});
  }
  return s;
}

inline std::vector<corpus::Sentence> random_raw_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<corpus::Sentence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_raw_sentence(rng, i));
  return out;
}

/// Brute-force cycle test over undirected non-NA edges, by exhaustive search
/// for a simple cycle of length >= 3.
inline bool has_long_cycle(const corpus::Sentence& s) {
  const std::size_t m = s.entity_count();
  std::vector<std::vector<bool>> adj(m, std::vector<bool>(m, false));
  for (const auto& t : s.triples) {
    if (t.relation == kNoRelation || t.subject == t.object) continue;
    adj[t.subject][t.object] = adj[t.object][t.subject] = true;
  }
  std::vector<std::size_t> path;
  std::vector<bool> used(m, false);
  auto dfs = [&](auto&& self, std::size_t start, std::size_t at) -> bool {
    for (std::size_t next = 0; next < m; ++next) {
      if (!adj[at][next]) continue;
      if (next == start && path.size() >= 3) return true;
      if (used[next] || next < start) continue;
      used[next] = true;
      path.push_back(next);
      if (self(self, start, next)) return true;
      path.pop_back();
      used[next] = false;
    }
    return false;
  };
  for (std::size_t start = 0; start < m; ++start) {
    std::fill(used.begin(), used.end(), false);
    path = {start};
    used[start] = true;
    if (dfs(dfs, start, start)) return true;
  }
  return false;
}

}  // namespace gpgnn::testing
