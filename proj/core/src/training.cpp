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

#include "gpgnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"
#include "gpgnn/random.hpp"

namespace gpgnn::train {

using ad::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

std::size_t TrainConfig::effective_node_dim() const {
  if (node_dim != 0) return node_dim;
  return layers == 1 ? 8 : 12;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (hidden_size == 0) throw ConfigError("hidden_size must be positive");
  if (layers == 0) throw ConfigError("layers (K) must be at least 1");
  const std::size_t d = effective_node_dim();
  if (d % 2 != 0) throw ConfigError("node_dim must be even, got " + std::to_string(d));
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(na_weight > 0.0 && na_weight <= 1.0)) throw ConfigError("na_weight must lie in (0, 1]");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (word_dim == 0 || position_dim == 0) throw ConfigError("embedding widths must be positive");
  if (target_accuracy && !train_metrics) {
    throw ConfigError("target_accuracy requires train_metrics");
  }
}

model::ModelConfig TrainConfig::model_config(std::size_t vocab_size,
                                             std::size_t num_relations) const {
  model::ModelConfig m;
  m.vocab_size = vocab_size;
  m.num_relations = num_relations;
  m.word_dim = word_dim;
  m.position_dim = position_dim;
  m.lstm_hidden = hidden_size;
  m.encoder_hidden = hidden_size;
  m.head_hidden = hidden_size;
  m.node_dim = effective_node_dim();
  m.layers = layers;
  m.activation = activation;
  m.tied = tied;
  m.train_word_embeddings = train_word_embeddings;
  return m;
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "learning_rate", "batch_size",   "dropout",       "hidden_size",
      "activation",    "node_dim",     "adjacency",     "layers",
      "epochs",        "patience",     "seed",          "word_dim",
      "position_dim",  "train_word_embeddings",         "na_weight",
      "clip_norm",     "beta1",        "beta2",         "epsilon",
      "workers",       "train_metrics", "target_accuracy", "log_timing",
      "optimizer"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown field '" + key + "'");
  }
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.dropout = j.value("dropout", c.dropout);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.activation = ad::parse_activation(j.value("activation", std::string("relu")));
    c.node_dim = j.value("node_dim", c.node_dim);
    const std::string adjacency = j.value("adjacency", std::string("untied"));
    if (adjacency != "tied" && adjacency != "untied") {
      throw ConfigError("config: adjacency must be 'tied' or 'untied'");
    }
    c.tied = adjacency == "tied";
    c.layers = j.value("layers", c.layers);
    c.epochs = j.value("epochs", c.epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.word_dim = j.value("word_dim", c.word_dim);
    c.position_dim = j.value("position_dim", c.position_dim);
    c.train_word_embeddings = j.value("train_word_embeddings", c.train_word_embeddings);
    c.na_weight = j.value("na_weight", c.na_weight);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.workers = j.value("workers", c.workers);
    c.train_metrics = j.value("train_metrics", c.train_metrics);
    c.log_timing = j.value("log_timing", c.log_timing);
    if (j.contains("target_accuracy") && !j["target_accuracy"].is_null()) {
      c.target_accuracy = j["target_accuracy"].get<double>();
    }
    if (j.contains("optimizer") && j["optimizer"] != "adam") {
      throw ConfigError("config: only the 'adam' optimizer is available");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json() const {
  json j = {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"dropout", dropout},
            {"hidden_size", hidden_size},
            {"activation", ad::activation_name(activation)},
            {"node_dim", effective_node_dim()},
            {"adjacency", tied ? "tied" : "untied"},
            {"layers", layers},
            {"epochs", epochs},
            {"patience", patience},
            {"seed", seed},
            {"word_dim", word_dim},
            {"position_dim", position_dim},
            {"train_word_embeddings", train_word_embeddings},
            {"na_weight", na_weight},
            {"clip_norm", clip_norm},
            {"optimizer", "adam"},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"workers", workers},
            {"train_metrics", train_metrics},
            {"target_accuracy", target_accuracy ? json(*target_accuracy) : json(nullptr)},
            {"log_timing", log_timing}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(OptimizerState& state, nn::ParameterStore& store, double lr) {
  for (const auto& [name, p] : store.entries()) {
    if (p.trainable && !p.tensor.has_grad()) {
      throw Error("adam_step: trainable parameter '" + name + "' has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable) {
      p.tensor.clear_grad();
      continue;
    }
    auto value = p.tensor.mutable_values();
    const auto grad = p.tensor.grad();
    Moments& m = state.moments[name];
    if (m.first.size() != value.size()) {
      m.first.assign(value.size(), 0.0);
      m.second.assign(value.size(), 0.0);
    }
    const std::size_t width = p.tensor.rank() == 2 ? p.tensor.dim(1) : value.size();
    std::vector<bool> frozen(value.size() / std::max<std::size_t>(width, 1), false);
    for (std::size_t r : p.frozen_rows) {
      if (r < frozen.size()) frozen[r] = true;
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!p.frozen_rows.empty() && frozen[i / width]) continue;
      const double g = grad[i];
      m.first[i] = state.beta1 * m.first[i] + (1.0 - state.beta1) * g;
      m.second[i] = state.beta2 * m.second[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    p.tensor.clear_grad();
  }
}

double clip_global_norm(nn::ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, p] : store.entries()) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, p] : store.entries()) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

SplitEvaluation evaluate_split(const model::GpGnnModel& model,
                               std::span<const model::EncodedSentence> sentences,
                               double na_weight) {
  SplitEvaluation out;
  for (const model::EncodedSentence& s : sentences) {
    const Tensor logits = model.pair_logits(s);
    const std::size_t c = logits.dim(1);
    if (!s.labels.empty()) {
      std::vector<double> weights(s.labels.size(), 1.0);
      for (std::size_t e = 0; e < weights.size(); ++e) {
        if (s.labels[e] == kNoRelationIndex) weights[e] = na_weight;
      }
      out.loss += ad::softmax_cross_entropy_rows(logits, s.labels, weights).item();
    }
    for (std::size_t e = 0; e < s.graph.edges.size(); ++e) {
      eval::PredictionRecord r;
      r.sentence_id = s.id;
      r.subject = s.graph.edges[e].first;
      r.object = s.graph.edges[e].second;
      r.subject_kb = s.entities[r.subject].kb_id;
      r.object_kb = s.entities[r.object].kb_id;
      r.probabilities = ad::softmax(logits.values().subspan(e * c, c));
      if (!s.labels.empty()) r.gold = s.labels[e];
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Forward + backward for one sentence; returns the (unscaled) loss.
double accumulate_sentence(const model::GpGnnModel& model,
                           const model::EncodedSentence& sentence,
                           const TrainConfig& config, std::uint64_t dropout_seed,
                           double scale) {
  Rng rng(dropout_seed);
  nn::ForwardContext ctx{true, config.dropout, &rng};
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Tensor loss = model.sentence_loss(sentence, ctx, config.na_weight);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss " + std::to_string(value) + " on sentence '" +
                       sentence.id + "'");
  }
  tape.backward(ad::scale(loss, scale));
  return value;
}

void add_grads(nn::ParameterStore& into, const nn::ParameterStore& from) {
  for (auto& [name, p] : into.entries()) {
    const nn::Parameter& src = from.at(name);
    if (!p.trainable || !src.tensor.has_grad()) continue;
    auto dst = p.tensor.mutable_grad();
    const auto g = src.tensor.grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }
}

json metrics_json(const std::optional<eval::SentenceMetrics>& m, bool accuracy) {
  if (!m) return nullptr;
  return accuracy ? json(m->accuracy) : json(m->macro_f1);
}

}  // namespace

TrainResult run_training(const TrainConfig& config, model::GpGnnModel& model,
                         std::span<const model::EncodedSentence> train,
                         std::span<const model::EncodedSentence> valid,
                         const TrainHooks& hooks) {
  config.validate();
  if (train.empty()) throw DataError("training split is empty");
  auto log = [&](const json& event) {
    if (hooks.log) hooks.log(event.dump());
  };
  log({{"event", "config"}, {"config", json::parse(config.to_json())}});

  OptimizerState optimizer;
  optimizer.beta1 = config.beta1;
  optimizer.beta2 = config.beta2;
  optimizer.epsilon = config.epsilon;

  const std::size_t workers = std::min(config.workers, config.batch_size);
  std::vector<model::GpGnnModel> replicas;
  for (std::size_t w = 1; w < workers; ++w) replicas.push_back(model.clone());

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  std::uint64_t visits = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best_f1 = -1.0;
  std::size_t stale = 0;
  model.store().clear_grads();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::size_t batch = end - begin;
      const double scale = 1.0 / static_cast<double>(batch);
      const std::uint64_t first_visit = visits;
      visits += batch;
      auto sentence_seed = [&](std::size_t k) {
        return derive_seed(dropout_seed, "sentence", first_visit + k);
      };
      if (workers == 1) {
        for (std::size_t k = 0; k < batch; ++k) {
          loss_sum += accumulate_sentence(model, train[order[begin + k]], config,
                                          sentence_seed(k), scale);
        }
      } else {
        // Worker w handles a contiguous slice of the batch on its own replica;
        // worker 0 is the primary model. Gradients are reduced in worker order.
        const std::size_t active = std::min(workers, batch);
        std::vector<double> partial(active, 0.0);
        std::vector<std::exception_ptr> failures(active);
        auto run_slice = [&](std::size_t w, model::GpGnnModel& m) {
          const std::size_t lo = batch * w / active;
          const std::size_t hi = batch * (w + 1) / active;
          try {
            for (std::size_t k = lo; k < hi; ++k) {
              partial[w] += accumulate_sentence(m, train[order[begin + k]], config,
                                                sentence_seed(k), scale);
            }
          } catch (...) {
            failures[w] = std::current_exception();
          }
        };
        for (std::size_t w = 1; w < active; ++w) {
          replicas[w - 1].store().copy_values_from(model.store());
          replicas[w - 1].store().clear_grads();
        }
        std::vector<std::thread> threads;
        for (std::size_t w = 1; w < active; ++w) {
          threads.emplace_back(run_slice, w, std::ref(replicas[w - 1]));
        }
        run_slice(0, model);
        for (auto& t : threads) t.join();
        for (const auto& f : failures) {
          if (f) std::rethrow_exception(f);
        }
        for (std::size_t w = 1; w < active; ++w) add_grads(model.store(), replicas[w - 1].store());
        for (double p : partial) loss_sum += p;
      }
      clip_global_norm(model.store(), config.clip_norm);
      adam_step(optimizer, model.store(), config.learning_rate);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    if (config.train_metrics) {
      const auto ev = evaluate_split(model, train, config.na_weight);
      record.train = eval::sentence_metrics(ev.records);
    }
    const double train_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - epoch_start).count();
    if (!valid.empty()) {
      const auto ev = evaluate_split(model, valid, config.na_weight);
      record.valid_loss = ev.loss / static_cast<double>(valid.size());
      record.valid = eval::sentence_metrics(ev.records);
    }
    const double total_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - epoch_start).count();

    auto timing = [&](double ms) { return config.log_timing ? json(ms) : json(nullptr); };
    log({{"epoch", epoch},
         {"split", "train"},
         {"loss", record.train_loss},
         {"acc", metrics_json(record.train, true)},
         {"macro_f1", metrics_json(record.train, false)},
         {"wall_ms", timing(train_ms)}});
    if (record.valid) {
      log({{"epoch", epoch},
           {"split", "valid"},
           {"loss", record.valid_loss},
           {"acc", record.valid->accuracy},
           {"macro_f1", record.valid->macro_f1},
           {"wall_ms", timing(total_ms)}});
    }
    result.epochs.push_back(record);

    const double f1 = record.valid ? record.valid->macro_f1 : 0.0;
    if (!record.valid || f1 > best_f1) {
      best_f1 = f1;
      stale = 0;
      result.best_epoch = epoch;
      result.best_valid_f1 = f1;
      result.best = nn::snapshot(model.store(), hooks.checkpoint_meta);
    } else {
      ++stale;
    }
    if (config.target_accuracy && record.train &&
        record.train->accuracy >= *config.target_accuracy) {
      result.stop_reason = "target_accuracy";
      break;
    }
    if (stale >= config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  nn::restore(model.store(), result.best);
  log({{"event", "stop"},
       {"reason", result.stop_reason},
       {"epochs", result.epochs.size()},
       {"best_epoch", result.best_epoch},
       {"best_valid_macro_f1", valid.empty() ? json(nullptr) : json(result.best_valid_f1)}});
  return result;
}

}  // namespace gpgnn::train
