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
#include <vector>

#include "gpgnn/corpus.hpp"
#include "gpgnn/layers.hpp"

namespace gpgnn::corpus {

/// Width of the pretrained word vectors (GloVe 6B, 50d).
inline constexpr std::size_t kWordDim = 50;

struct EmbeddingLoadReport {
  std::size_t lines = 0;
  std::size_t found = 0;    // vocabulary rows filled from the file
  std::size_t missing = 0;  // vocabulary rows left at random init
  std::vector<LineError> errors;
  bool zero_overlap = false;
};

/// Reads "token v1 ... v50" lines into a table with one row per vocabulary
/// entry. Rows without a vector keep the random unknown-style init; the
/// padding row is zero. The returned table is not registered in any store.
nn::EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                                   Rng& rng, EmbeddingLoadReport* report = nullptr);
nn::EmbeddingTable load_embedding_file(const std::filesystem::path& path,
                                       const Vocabulary& vocab, Rng& rng,
                                       EmbeddingLoadReport* report = nullptr);

}  // namespace gpgnn::corpus
