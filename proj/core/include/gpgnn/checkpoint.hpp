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

// Checkpoint layout:
//   u64 little-endian  header length N
//   N bytes            JSON header
//                        {"version": "gpgnn-ckpt-1",
//                         "tensors": {name: {"shape": [...], "offset": bytes,
//                                            "trainable": bool,
//                                            "frozen_rows": [...]}},
//                         "meta": {...}}
//   payload            float64 little-endian values, tensors in name order;
//                      offsets are relative to the payload start.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gpgnn/layers.hpp"

namespace gpgnn::nn {

inline constexpr const char* kCheckpointVersion = "gpgnn-ckpt-1";

struct CheckpointTensor {
  ad::Shape shape;
  std::vector<double> values;
  bool trainable = true;
  std::vector<std::size_t> frozen_rows;
};

struct Checkpoint {
  std::map<std::string, CheckpointTensor> tensors;
  // Serialized JSON object carried alongside the tensors (config,
  // vocabularies, ...). "{}" when absent.
  std::string meta_json = "{}";
};

Checkpoint snapshot(const ParameterStore& store, std::string meta_json = "{}");

void write_checkpoint(const std::filesystem::path& path,
                      const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into an existing store with identical names
/// and shapes.
void restore(ParameterStore& store, const Checkpoint& checkpoint);

}  // namespace gpgnn::nn
