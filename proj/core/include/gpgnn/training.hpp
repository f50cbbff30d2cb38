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

// Mini-batch training with Adam, global-norm clipping, validation-based
// early stopping and JSON-lines run logs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpgnn/checkpoint.hpp"
#include "gpgnn/evaluation.hpp"
#include "gpgnn/layers.hpp"
#include "gpgnn/model.hpp"

namespace gpgnn::train {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 50;
  double dropout = 0.5;
  std::size_t hidden_size = 256;
  ad::Activation activation = ad::Activation::kRelu;
  /// 0 selects 8 for one layer and 12 otherwise.
  std::size_t node_dim = 0;
  bool tied = false;
  std::size_t layers = 3;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 7;

  std::size_t word_dim = 50;
  std::size_t position_dim = 10;
  bool train_word_embeddings = true;
  double na_weight = 1.0;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t workers = 1;
  /// Evaluate the training split after every epoch (no dropout).
  bool train_metrics = false;
  /// Stop once training accuracy reaches this value; needs train_metrics.
  std::optional<double> target_accuracy;
  /// Include wall-clock times in the run log.
  bool log_timing = true;

  std::size_t effective_node_dim() const;
  /// Throws ConfigError.
  void validate() const;
  model::ModelConfig model_config(std::size_t vocab_size,
                                  std::size_t num_relations) const;

  /// Unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct Moments {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;
};

/// Bias-corrected Adam update on every trainable parameter, skipping frozen
/// rows; gradients are cleared afterward. Throws Error naming a trainable
/// parameter without a gradient.
void adam_step(OptimizerState& state, nn::ParameterStore& store, double lr);

/// Scales all trainable gradients so their global L2 norm is at most
/// `max_norm`; returns the norm before scaling.
double clip_global_norm(nn::ParameterStore& store, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<eval::SentenceMetrics> train;
  std::optional<eval::SentenceMetrics> valid;
  double valid_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_f1 = 0.0;
  std::string stop_reason;
  nn::Checkpoint best;
};

struct TrainHooks {
  /// Receives every run-log line (without the trailing newline).
  std::function<void(const std::string&)> log;
  /// Metadata stored in checkpoints.
  std::string checkpoint_meta = "{}";
};

/// Trains `model` in place. On return the model holds the best-validation
/// parameters (the last epoch's when `valid` is empty). Throws NumericError
/// naming the sentence whose loss is not finite.
TrainResult run_training(const TrainConfig& config, model::GpGnnModel& model,
                         std::span<const model::EncodedSentence> train,
                         std::span<const model::EncodedSentence> valid,
                         const TrainHooks& hooks = {});

/// Summed loss and prediction records for a split, without dropout.
struct SplitEvaluation {
  double loss = 0.0;
  std::vector<eval::PredictionRecord> records;
};
SplitEvaluation evaluate_split(const model::GpGnnModel& model,
                               std::span<const model::EncodedSentence> sentences,
                               double na_weight = 1.0);

}  // namespace gpgnn::train
