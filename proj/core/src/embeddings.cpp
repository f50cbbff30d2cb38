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

#include "gpgnn/embeddings.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gpgnn/error.hpp"

namespace gpgnn::corpus {

nn::EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                                   Rng& rng, EmbeddingLoadReport* report) {
  EmbeddingLoadReport local;
  EmbeddingLoadReport& rep = report != nullptr ? *report : local;
  rep = {};

  const std::size_t rows = vocab.size();
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> values(rows * kWordDim, 0.0);
  for (std::size_t i = kWordDim; i < values.size(); ++i) values[i] = dist(rng);
  std::vector<bool> filled(rows, false);

  std::string line;
  std::vector<double> vec;
  while (std::getline(in, line)) {
    ++rep.lines;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    vec.clear();
    std::string field;
    bool bad_number = false;
    while (fields >> field) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        bad_number = true;
        break;
      }
      vec.push_back(v);
    }
    if (bad_number) {
      rep.errors.push_back({rep.lines, "unparseable value '" + field + "'"});
      continue;
    }
    if (vec.size() != kWordDim) {
      rep.errors.push_back({rep.lines, "expected " + std::to_string(kWordDim) +
                                           " values, got " +
                                           std::to_string(vec.size())});
      continue;
    }
    auto row = vocab.find(token);
    if (!row || *row == nn::kPaddingRow || filled[*row]) continue;
    std::copy(vec.begin(), vec.end(), values.begin() + *row * kWordDim);
    filled[*row] = true;
  }
  // Rows 0 and 1 are structural and never counted as vocabulary words.
  for (std::size_t r = 2; r < rows; ++r) (filled[r] ? rep.found : rep.missing)++;
  rep.zero_overlap = rep.found == 0;
  nn::EmbeddingTable table{
      ad::Tensor(ad::Shape{rows, kWordDim}, std::move(values)), true};
  return table;
}

nn::EmbeddingTable load_embedding_file(const std::filesystem::path& path,
                                       const Vocabulary& vocab, Rng& rng,
                                       EmbeddingLoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read embedding file " + path.string());
  return load_embeddings(in, vocab, rng, report);
}

}  // namespace gpgnn::corpus
