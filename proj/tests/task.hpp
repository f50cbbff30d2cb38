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

#include <vector>

#include "gpgnn/corpus.hpp"
#include "gpgnn/model.hpp"
#include "gpgnn/synth.hpp"

namespace gpgnn::testing {

/// A synthetic corpus normalized and encoded against a training vocabulary.
struct EncodedTask {
  synth::SynthCorpus corpus;
  corpus::Vocabulary vocab;
  std::vector<model::EncodedSentence> train;
  std::vector<model::EncodedSentence> valid;
  std::vector<model::EncodedSentence> test;
};

inline std::vector<model::EncodedSentence> normalize_and_encode(
    const std::vector<corpus::Sentence>& raw, const synth::SynthCorpus& corpus,
    const corpus::Vocabulary& vocab) {
  corpus::NormalizationStats stats;
  const auto normalized =
      corpus::normalize_dataset(raw, corpus.inverses, &corpus.relations, stats);
  std::vector<model::EncodedSentence> out;
  for (const auto& s : normalized) out.push_back(model::encode_sentence(s, vocab, corpus.relations));
  return out;
}

inline EncodedTask make_task(const synth::SynthSpec& spec) {
  EncodedTask task;
  task.corpus = synth::synthesize_multihop_corpus(spec);
  task.vocab = corpus::Vocabulary::build(task.corpus.train);
  task.train = normalize_and_encode(task.corpus.train, task.corpus, task.vocab);
  task.valid = normalize_and_encode(task.corpus.valid, task.corpus, task.vocab);
  task.test = normalize_and_encode(task.corpus.test, task.corpus, task.vocab);
  return task;
}

}  // namespace gpgnn::testing
