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

#include "gpgnn/model.hpp"

#include <algorithm>

#include "gpgnn/error.hpp"
#include "gpgnn/random.hpp"

namespace gpgnn::model {

using ad::Shape;

void ModelConfig::validate() const {
  if (node_dim == 0 || node_dim % 2 != 0) {
    throw ConfigError("node state width d_n must be a positive even integer, got " +
                      std::to_string(node_dim));
  }
  if (layers == 0) throw ConfigError("at least one propagation layer is required");
  if (vocab_size < 2) throw ConfigError("vocabulary needs padding and unknown rows");
  if (num_relations == 0) throw ConfigError("relation vocabulary is empty");
  if (word_dim == 0 || position_dim == 0 || lstm_hidden == 0 ||
      encoder_hidden == 0 || head_hidden == 0) {
    throw ConfigError("layer widths must be positive");
  }
}

// ---------------------------------------------------------------------------
// Graph

std::size_t EntityGraph::edge_index(std::size_t i, std::size_t j) const {
  if (i == j || i >= entities || j >= entities) {
    throw DimensionError("no edge (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") in a graph of " +
                         std::to_string(entities) + " entities");
  }
  return i * (entities - 1) + (j < i ? j : j - 1);
}

EntityGraph complete_graph(std::size_t entities) {
  EntityGraph g;
  g.entities = entities;
  g.edges.reserve(entities * (entities - 1));
  for (std::size_t i = 0; i < entities; ++i) {
    for (std::size_t j = 0; j < entities; ++j) {
      if (i != j) g.edges.emplace_back(i, j);
    }
  }
  return g;
}

std::optional<EntityGraph> build_entity_graph(const corpus::Sentence& sentence) {
  const std::size_t m = sentence.entity_count();
  if (m < 2) return std::nullopt;
  if (m > corpus::kMaxEntities) {
    throw DataError("sentence " + sentence.id + " has " + std::to_string(m) +
                    " entities; at most " + std::to_string(corpus::kMaxEntities) +
                    " are supported");
  }
  return complete_graph(m);
}

std::vector<std::size_t> position_markers(
    std::span<const corpus::EntityMention> entities, std::size_t length,
    std::size_t first, std::size_t second) {
  const corpus::EntityMention& a = entities[first];
  const corpus::EntityMention& b = entities[second];
  if (a.start < b.end && b.start < a.end) {
    throw DataError("entity spans " + std::to_string(first) + " and " +
                    std::to_string(second) + " overlap");
  }
  if (a.end > length || b.end > length) {
    throw DataError("entity span exceeds sentence length");
  }
  std::vector<std::size_t> markers(length, kNeither);
  for (std::size_t t = a.start; t < a.end; ++t) markers[t] = kFirstEntity;
  for (std::size_t t = b.start; t < b.end; ++t) markers[t] = kSecondEntity;
  return markers;
}

EncodedSentence encode_sentence(const corpus::Sentence& sentence,
                                const corpus::Vocabulary& vocab,
                                const RelationVocab& relations,
                                bool require_labels) {
  auto graph = build_entity_graph(sentence);
  if (!graph) {
    throw DataError("sentence " + sentence.id + " has fewer than 2 entities");
  }
  EncodedSentence enc;
  enc.id = sentence.id;
  enc.entities = sentence.entities;
  enc.token_ids.reserve(sentence.tokens.size());
  for (const std::string& t : sentence.tokens) enc.token_ids.push_back(vocab.index(t));

  std::vector<std::size_t> labels(graph->edges.size());
  bool complete = true;
  for (std::size_t e = 0; e < graph->edges.size(); ++e) {
    const auto [i, j] = graph->edges[e];
    const corpus::RelationTriple* t = sentence.find_triple(i, j);
    if (t == nullptr) {
      if (require_labels) {
        throw DataError("sentence " + sentence.id + ": missing gold label for pair (" +
                        std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      complete = false;
      break;
    }
    labels[e] = relations.index(t->relation);
  }
  if (complete) enc.labels = std::move(labels);
  enc.graph = std::move(*graph);
  return enc;
}

// ---------------------------------------------------------------------------
// Encoding

Tensor encode_edge_context(const EncodedSentence& sentence, Edge edge,
                           const nn::EmbeddingTable& words,
                           const nn::EmbeddingTable& positions) {
  if (positions.rows() != kMarkerCount) {
    throw DimensionError("position table must have exactly 3 rows, got " +
                         std::to_string(positions.rows()));
  }
  const auto markers = position_markers(sentence.entities, sentence.length(),
                                        edge.first, edge.second);
  return ad::concat({nn::embedding_lookup(words, sentence.token_ids),
                     nn::embedding_lookup(positions, markers)},
                    1);
}

Tensor TransitionMatrices::matrix(std::size_t layer, std::size_t edge) const {
  const std::size_t row[] = {edge};
  return ad::reshape(ad::gather_rows(layers.at(layer), row),
                     Shape{node_dim, node_dim});
}

TransitionMatrices generate_transition_matrices(
    const EncodedSentence& sentence, std::span<const EdgeEncoder> encoders,
    std::size_t layers, std::size_t node_dim, const nn::EmbeddingTable& words,
    const nn::EmbeddingTable& positions, const nn::ForwardContext& ctx) {
  if (encoders.size() != layers && encoders.size() != 1) {
    throw ConfigError("need one edge encoder per layer (or one when tied), got " +
                      std::to_string(encoders.size()) + " for " +
                      std::to_string(layers) + " layers");
  }
  if (positions.rows() != kMarkerCount) {
    throw DimensionError("position table must have exactly 3 rows");
  }
  for (const EdgeEncoder& enc : encoders) {
    if (enc.mlp.output_dim() != node_dim * node_dim) {
      throw DimensionError("encoder MLP emits " +
                           std::to_string(enc.mlp.output_dim()) +
                           " values, a " + std::to_string(node_dim) + "x" +
                           std::to_string(node_dim) + " matrix needs " +
                           std::to_string(node_dim * node_dim));
    }
  }
  const EntityGraph& graph = sentence.graph;
  const std::size_t edges = graph.edges.size();
  const std::size_t length = sentence.length();

  std::vector<std::vector<std::size_t>> markers;
  markers.reserve(edges);
  for (const Edge& e : graph.edges) {
    markers.push_back(position_markers(sentence.entities, length, e.first, e.second));
  }
  // Time-major stacking: row t*E + e holds token t seen from edge e.
  std::vector<std::size_t> token_index;
  std::vector<std::size_t> marker_index;
  token_index.reserve(length * edges);
  marker_index.reserve(length * edges);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t e = 0; e < edges; ++e) {
      token_index.push_back(sentence.token_ids[t]);
      marker_index.push_back(markers[e][t]);
    }
  }
  const Tensor inputs = ad::concat({nn::embedding_lookup(words, token_index),
                                    nn::embedding_lookup(positions, marker_index)},
                                   1);

  std::vector<Tensor> generated;
  for (const EdgeEncoder& enc : encoders) {
    Tensor h = nn::bilstm_encode_stacked(enc.forward, enc.backward, inputs, length);
    h = nn::maybe_dropout(h, ctx);
    generated.push_back(nn::mlp_forward(enc.mlp, h, ctx));
  }
  TransitionMatrices out;
  out.node_dim = node_dim;
  for (std::size_t n = 0; n < layers; ++n) {
    out.layers.push_back(generated[encoders.size() == 1 ? 0 : n]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Propagation

Tensor initialize_node_states(const EntityGraph& graph, Edge target,
                              std::size_t node_dim) {
  const Edge targets[] = {target};
  return initialize_node_states(graph, targets, node_dim);
}

Tensor initialize_node_states(const EntityGraph& graph,
                              std::span<const Edge> targets,
                              std::size_t node_dim) {
  if (node_dim == 0 || node_dim % 2 != 0) {
    throw ConfigError("node state width must be a positive even integer, got " +
                      std::to_string(node_dim));
  }
  const std::size_t m = graph.entities;
  const std::size_t half = node_dim / 2;
  std::vector<double> v(targets.size() * m * node_dim, 0.0);
  for (std::size_t p = 0; p < targets.size(); ++p) {
    const auto [s, o] = targets[p];
    if (s == o || s >= m || o >= m) {
      throw DimensionError("invalid target pair (" + std::to_string(s) + ", " +
                           std::to_string(o) + ")");
    }
    double* subject = v.data() + (p * m + s) * node_dim;
    double* object = v.data() + (p * m + o) * node_dim;
    std::fill(subject, subject + half, 1.0);
    std::fill(object + half, object + node_dim, 1.0);
  }
  return Tensor(Shape{targets.size() * m, node_dim}, std::move(v));
}

Tensor propagate_layer(const Tensor& states, const Tensor& transitions,
                       const EntityGraph& graph, std::size_t pairs,
                       Activation activation) {
  const std::size_t m = graph.entities;
  const std::size_t edges = graph.edges.size();
  if (states.rank() != 2 || states.dim(0) != pairs * m) {
    throw DimensionError("propagate_layer: states " +
                         ad::shape_string(states.shape()) + " for " +
                         std::to_string(pairs) + " pairs of " +
                         std::to_string(m) + " nodes");
  }
  const std::size_t d = states.dim(1);
  if (transitions.rank() != 2 || transitions.dim(0) != edges ||
      transitions.dim(1) != d * d) {
    throw DimensionError("propagate_layer: transitions " +
                         ad::shape_string(transitions.shape()) + " for " +
                         std::to_string(edges) + " edges of width " +
                         std::to_string(d));
  }
  std::vector<std::size_t> matrix_rows, sources, targets;
  matrix_rows.reserve(pairs * edges);
  sources.reserve(pairs * edges);
  targets.reserve(pairs * edges);
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t e = 0; e < edges; ++e) {
      const auto [i, j] = graph.edges[e];
      matrix_rows.push_back(e);
      sources.push_back(p * m + j);
      targets.push_back(p * m + i);
    }
  }
  const Tensor a = pairs == 1 ? transitions : ad::gather_rows(transitions, matrix_rows);
  const Tensor messages = ad::activate(
      activation, ad::batched_matvec(a, ad::gather_rows(states, sources)));
  return ad::scatter_add_rows(messages, targets, pairs * m);
}

Tensor pair_representation(std::span<const Tensor> layer_states,
                           std::span<const Edge> targets, std::size_t entities) {
  if (layer_states.empty()) {
    throw DimensionError("pair_representation: no propagated layers");
  }
  std::vector<std::size_t> subject_rows, object_rows;
  for (std::size_t p = 0; p < targets.size(); ++p) {
    subject_rows.push_back(p * entities + targets[p].first);
    object_rows.push_back(p * entities + targets[p].second);
  }
  std::vector<Tensor> blocks;
  for (const Tensor& h : layer_states) {
    if (h.rank() != 2 || h.dim(0) != targets.size() * entities) {
      throw DimensionError("pair_representation: layer states " +
                           ad::shape_string(h.shape()) + " do not match " +
                           std::to_string(targets.size()) + " pairs");
    }
    blocks.push_back(ad::mul(ad::gather_rows(h, subject_rows),
                             ad::gather_rows(h, object_rows)));
  }
  return blocks.size() == 1 ? blocks.front() : ad::concat(blocks, 1);
}

std::vector<double> classify_pair(const Tensor& representation,
                                  const nn::MlpParams& head) {
  const Tensor logits = nn::mlp_forward(head, representation);
  return ad::softmax(logits.values());
}

// ---------------------------------------------------------------------------
// Model

namespace {

std::string encoder_prefix(std::size_t n) { return "encoder.layer" + std::to_string(n); }

Tensor logits_from(const TransitionMatrices& transitions, const EntityGraph& graph,
                   std::span<const Edge> targets, const nn::MlpParams& head,
                   Activation activation, const nn::ForwardContext& ctx) {
  const std::size_t pairs = targets.size();
  Tensor h = initialize_node_states(graph, targets, transitions.node_dim);
  std::vector<Tensor> layers;
  for (const Tensor& a : transitions.layers) {
    h = propagate_layer(h, a, graph, pairs, activation);
    layers.push_back(h);
  }
  const Tensor r = pair_representation(layers, targets, graph.entities);
  return nn::mlp_forward(head, r, ctx);
}

}  // namespace

GpGnnModel::GpGnnModel(ModelConfig config, nn::ParameterStore store)
    : config_(std::move(config)), store_(std::move(store)) {}

GpGnnModel GpGnnModel::create(const ModelConfig& config, Rng& init_rng) {
  config.validate();
  nn::ParameterStore store;
  nn::EmbeddingTable::create(store, "embed.word", config.vocab_size,
                             config.word_dim, init_rng,
                             config.train_word_embeddings);
  nn::EmbeddingTable::create(store, "embed.position", kMarkerCount,
                             config.position_dim, init_rng, true, 1.0,
                             /*reserve_padding=*/false);
  for (std::size_t n = 0; n < config.encoder_count(); ++n) {
    const std::string prefix = encoder_prefix(n);
    const std::size_t input = config.word_dim + config.position_dim;
    nn::LstmParams::create(store, prefix + ".lstm_fwd", input, config.lstm_hidden,
                           init_rng);
    nn::LstmParams::create(store, prefix + ".lstm_bwd", input, config.lstm_hidden,
                           init_rng);
    const std::size_t dims[] = {2 * config.lstm_hidden, config.encoder_hidden,
                                config.node_dim * config.node_dim};
    nn::MlpParams::create(store, prefix + ".mlp", dims, config.activation, init_rng);
  }
  const std::size_t head_dims[] = {config.layers * config.node_dim,
                                   config.head_hidden, config.num_relations};
  nn::MlpParams::create(store, "head", head_dims, config.activation, init_rng);
  return bind(config, std::move(store));
}

GpGnnModel GpGnnModel::bind(const ModelConfig& config, nn::ParameterStore store) {
  config.validate();
  GpGnnModel model(config, std::move(store));
  model.bind_layers();
  return model;
}

void GpGnnModel::bind_layers() {
  words_ = nn::EmbeddingTable::bind(store_, "embed.word");
  positions_ = nn::EmbeddingTable::bind(store_, "embed.position");
  if (words_.rows() != config_.vocab_size || words_.dim() != config_.word_dim) {
    throw ConfigError("word table shape does not match the model config");
  }
  encoders_.clear();
  for (std::size_t n = 0; n < config_.encoder_count(); ++n) {
    const std::string prefix = encoder_prefix(n);
    encoders_.push_back(
        EdgeEncoder{nn::LstmParams::bind(store_, prefix + ".lstm_fwd"),
                    nn::LstmParams::bind(store_, prefix + ".lstm_bwd"),
                    nn::MlpParams::bind(store_, prefix + ".mlp", 2,
                                        config_.activation)});
  }
  head_ = nn::MlpParams::bind(store_, "head", 2, config_.activation);
}

GpGnnModel GpGnnModel::clone() const { return bind(config_, store_.clone()); }

void GpGnnModel::set_word_vectors(const nn::EmbeddingTable& pretrained) {
  if (pretrained.weights.shape() != words_.weights.shape()) {
    throw DimensionError("pretrained table " +
                         ad::shape_string(pretrained.weights.shape()) +
                         " does not match " +
                         ad::shape_string(words_.weights.shape()));
  }
  auto dst = words_.weights.mutable_values();
  std::ranges::copy(pretrained.weights.values(), dst.begin());
  std::fill_n(dst.begin(), words_.dim(), 0.0);
}

TransitionMatrices GpGnnModel::transitions(const EncodedSentence& sentence,
                                           const nn::ForwardContext& ctx) const {
  return generate_transition_matrices(sentence, encoders_, config_.layers,
                                      config_.node_dim, words_, positions_, ctx);
}

Tensor GpGnnModel::pair_logits(const EncodedSentence& sentence,
                               const nn::ForwardContext& ctx,
                               std::span<const Edge> targets) const {
  if (targets.empty()) targets = sentence.graph.edges;
  const TransitionMatrices a = transitions(sentence, ctx);
  return logits_from(a, sentence.graph, targets, head_, config_.activation, ctx);
}

Tensor GpGnnModel::pair_logits_unbatched(const EncodedSentence& sentence,
                                         const nn::ForwardContext& ctx) const {
  const TransitionMatrices a = transitions(sentence, ctx);
  std::vector<Tensor> rows;
  for (const Edge& target : sentence.graph.edges) {
    const Edge one[] = {target};
    rows.push_back(logits_from(a, sentence.graph, one, head_, config_.activation, ctx));
  }
  return ad::concat(rows, 0);
}

Tensor GpGnnModel::sentence_loss(const EncodedSentence& sentence,
                                 const nn::ForwardContext& ctx,
                                 double na_weight) const {
  if (sentence.labels.size() != sentence.graph.edges.size()) {
    throw DataError("sentence " + sentence.id + " is missing gold labels");
  }
  const Tensor logits = pair_logits(sentence, ctx);
  std::vector<double> weights(sentence.labels.size(), 1.0);
  for (std::size_t e = 0; e < weights.size(); ++e) {
    if (sentence.labels[e] == kNoRelationIndex) weights[e] = na_weight;
  }
  return ad::softmax_cross_entropy_rows(logits, sentence.labels, weights);
}

std::vector<std::vector<double>> GpGnnModel::predict(
    const EncodedSentence& sentence) const {
  const Tensor logits = pair_logits(sentence);
  const std::size_t c = logits.dim(1);
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < logits.dim(0); ++p) {
    out.push_back(ad::softmax(logits.values().subspan(p * c, c)));
  }
  return out;
}

// ---------------------------------------------------------------------------

ToyProblem make_toy_problem(std::uint64_t seed, std::size_t layers,
                            std::size_t entities, Activation activation) {
  if (entities < 2 || entities > corpus::kMaxEntities) {
    throw ConfigError("toy problem needs 2..9 entities");
  }
  Rng rng(derive_seed(seed, "toy"));
  corpus::Sentence s;
  s.id = "toy";
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
  std::uniform_int_distribution<std::size_t> pick_word(0, words.size() - 1);
  for (std::size_t e = 0; e < entities; ++e) {
    s.entities.push_back({s.tokens.size(), s.tokens.size() + 1, "q" + std::to_string(e)});
    s.tokens.push_back("ent" + std::to_string(e));
    s.tokens.push_back(words[pick_word(rng)]);
  }
  const RelationVocab relations({kNoRelation, "linked", "linked_by"},
                                close_inverse_map({{"linked", "linked_by"}}));
  std::uniform_int_distribution<std::size_t> pick_label(0, relations.size() - 1);
  for (std::size_t i = 0; i < entities; ++i) {
    for (std::size_t j = 0; j < entities; ++j) {
      if (i != j) s.triples.push_back({i, j, relations.name(pick_label(rng))});
    }
  }
  const auto vocab = corpus::Vocabulary::build(std::span(&s, 1));

  ModelConfig config;
  config.vocab_size = vocab.size();
  config.num_relations = relations.size();
  config.word_dim = 3;
  config.position_dim = 2;
  config.lstm_hidden = 3;
  config.encoder_hidden = 4;
  config.head_hidden = 4;
  config.node_dim = 4;
  config.layers = layers;
  config.activation = activation;
  Rng init(derive_seed(seed, "init"));
  GpGnnModel model = GpGnnModel::create(config, init);
  EncodedSentence encoded = encode_sentence(s, vocab, relations);
  return {std::move(model), std::move(encoded)};
}

ad::GradCheckReport check_model_gradients(GpGnnModel& model,
                                          const EncodedSentence& sentence,
                                          const ad::GradCheckOptions& options) {
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, p] : model.store().entries()) {
    if (!p.trainable) continue;
    params.push_back(p.tensor);
    names.push_back(name);
  }
  return ad::grad_check_params([&] { return model.sentence_loss(sentence); }, params,
                               names, options);
}

}  // namespace gpgnn::model
