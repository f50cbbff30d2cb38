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

// Graph neural network whose edge transition matrices are generated from
// text. For a sentence with m entities:
//
//   1. every ordered entity pair (i, j) gets the sentence re-embedded with
//      entity-position markers and encoded by a BiLSTM + MLP into a
//      d x d transition matrix A[n][i][j] (one encoder per layer n);
//   2. for each target pair (s, o), node states start as flags
//      (s = [1..1, 0..0], o = [0..0, 1..1], others 0) and propagate K times
//      via h_i <- sum_{j != i} act(A[n][i][j] h_j);
//   3. the pair is classified from concat_k (h_s^k * h_o^k), k = 1..K.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpgnn/corpus.hpp"
#include "gpgnn/gradcheck.hpp"
#include "gpgnn/layers.hpp"
#include "gpgnn/relations.hpp"

namespace gpgnn::model {

using ad::Activation;
using ad::Tensor;

struct ModelConfig {
  std::size_t vocab_size = 2;
  std::size_t num_relations = 1;
  std::size_t word_dim = 50;
  std::size_t position_dim = 10;
  std::size_t lstm_hidden = 256;
  std::size_t encoder_hidden = 256;
  std::size_t head_hidden = 256;
  std::size_t node_dim = 12;
  std::size_t layers = 2;
  Activation activation = Activation::kRelu;
  bool tied = false;
  bool train_word_embeddings = true;

  /// Throws ConfigError on an odd or zero node_dim, zero layers, etc.
  void validate() const;
  /// Number of distinct edge encoders (1 when tied).
  std::size_t encoder_count() const { return tied ? 1 : layers; }
};

// ---------------------------------------------------------------------------
// Graph

using Edge = std::pair<std::size_t, std::size_t>;

struct EntityGraph {
  std::size_t entities = 0;
  /// All ordered pairs (i, j), i != j, in lexicographic order.
  std::vector<Edge> edges;

  std::size_t edge_index(std::size_t i, std::size_t j) const;
};

/// nullopt when the sentence has fewer than 2 entities (skip signal);
/// DataError above corpus::kMaxEntities.
std::optional<EntityGraph> build_entity_graph(const corpus::Sentence& sentence);
EntityGraph complete_graph(std::size_t entities);

enum Marker : std::uint8_t { kNeither = 0, kFirstEntity = 1, kSecondEntity = 2 };
inline constexpr std::size_t kMarkerCount = 3;

/// Marker per token for the ordered pair (first, second). Overlapping spans
/// raise DataError.
std::vector<std::size_t> position_markers(std::span<const corpus::EntityMention> entities,
                                          std::size_t length, std::size_t first,
                                          std::size_t second);

/// A sentence mapped onto vocabulary and relation indices.
struct EncodedSentence {
  std::string id;
  std::vector<std::size_t> token_ids;
  std::vector<corpus::EntityMention> entities;
  EntityGraph graph;
  /// Gold relation index per graph edge; empty when unlabeled.
  std::vector<std::size_t> labels;

  std::size_t length() const { return token_ids.size(); }
};

/// With `require_labels`, every ordered pair must carry a triple
/// (DataError otherwise).
EncodedSentence encode_sentence(const corpus::Sentence& sentence,
                                const corpus::Vocabulary& vocab,
                                const RelationVocab& relations,
                                bool require_labels = true);

// ---------------------------------------------------------------------------
// Encoding

struct EdgeEncoder {
  nn::LstmParams forward;
  nn::LstmParams backward;
  nn::MlpParams mlp;
};

/// [l x (word_dim + position_dim)] rows [x_t ; p_t] for the edge (i, j).
Tensor encode_edge_context(const EncodedSentence& sentence, Edge edge,
                           const nn::EmbeddingTable& words,
                           const nn::EmbeddingTable& positions);

/// One [E x d*d] tensor per propagation layer; row e is A for graph edge e,
/// flattened row-major.
struct TransitionMatrices {
  std::vector<Tensor> layers;
  std::size_t node_dim = 0;

  /// A[layer][edge] as a d x d matrix.
  Tensor matrix(std::size_t layer, std::size_t edge) const;
};

TransitionMatrices generate_transition_matrices(
    const EncodedSentence& sentence, std::span<const EdgeEncoder> encoders,
    std::size_t layers, std::size_t node_dim, const nn::EmbeddingTable& words,
    const nn::EmbeddingTable& positions, const nn::ForwardContext& ctx = {});

// ---------------------------------------------------------------------------
// Propagation

/// Layer-0 states [m x d] for one target pair.
Tensor initialize_node_states(const EntityGraph& graph, Edge target,
                              std::size_t node_dim);
/// Stacked layer-0 states [P*m x d]; block p belongs to targets[p].
Tensor initialize_node_states(const EntityGraph& graph,
                              std::span<const Edge> targets,
                              std::size_t node_dim);

/// One propagation step for `pairs` stacked state blocks of m rows each:
/// h_i' = sum_{j != i} act(A_ij h_j).
Tensor propagate_layer(const Tensor& states, const Tensor& transitions,
                       const EntityGraph& graph, std::size_t pairs,
                       Activation activation);

/// concat over k of h_s^k * h_o^k using layers 1..K ([P*m x d] each).
Tensor pair_representation(std::span<const Tensor> layer_states,
                           std::span<const Edge> targets, std::size_t entities);

/// Softmax of the head's logits for a single representation vector.
std::vector<double> classify_pair(const Tensor& representation,
                                  const nn::MlpParams& head);

// ---------------------------------------------------------------------------

class GpGnnModel {
 public:
  static GpGnnModel create(const ModelConfig& config, Rng& init_rng);
  /// Rebinds layer handles onto an existing store (e.g. a clone).
  static GpGnnModel bind(const ModelConfig& config, nn::ParameterStore store);

  GpGnnModel clone() const;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  const nn::EmbeddingTable& words() const { return words_; }
  const nn::EmbeddingTable& positions() const { return positions_; }
  std::span<const EdgeEncoder> encoders() const { return encoders_; }
  const nn::MlpParams& head() const { return head_; }

  /// Copies pretrained vectors into the word table (rows and width must
  /// match); the padding row stays zero.
  void set_word_vectors(const nn::EmbeddingTable& pretrained);

  TransitionMatrices transitions(const EncodedSentence& sentence,
                                 const nn::ForwardContext& ctx = {}) const;
  /// Logits [P x |R|] for `targets` (default: every graph edge).
  Tensor pair_logits(const EncodedSentence& sentence,
                     const nn::ForwardContext& ctx = {},
                     std::span<const Edge> targets = {}) const;
  /// Same result computed one target pair at a time.
  Tensor pair_logits_unbatched(const EncodedSentence& sentence,
                               const nn::ForwardContext& ctx = {}) const;
  /// Summed cross entropy over every ordered pair. Pairs labelled NA are
  /// weighted by `na_weight`.
  Tensor sentence_loss(const EncodedSentence& sentence,
                       const nn::ForwardContext& ctx = {},
                       double na_weight = 1.0) const;
  /// Relation distribution per graph edge.
  std::vector<std::vector<double>> predict(const EncodedSentence& sentence) const;

 private:
  GpGnnModel(ModelConfig config, nn::ParameterStore store);
  void bind_layers();

  ModelConfig config_;
  nn::ParameterStore store_;
  nn::EmbeddingTable words_;
  nn::EmbeddingTable positions_;
  std::vector<EdgeEncoder> encoders_;
  nn::MlpParams head_;
};

/// A tiny random model with one fully labelled sentence, sized for
/// exhaustive finite-difference checks.
struct ToyProblem {
  GpGnnModel model;
  EncodedSentence sentence;
};
ToyProblem make_toy_problem(std::uint64_t seed, std::size_t layers = 2,
                            std::size_t entities = 3,
                            Activation activation = Activation::kRelu);

/// Central-difference check of sentence_loss against every trainable
/// parameter of `model`.
ad::GradCheckReport check_model_gradients(GpGnnModel& model,
                                          const EncodedSentence& sentence,
                                          const ad::GradCheckOptions& options = {});

}  // namespace gpgnn::model
