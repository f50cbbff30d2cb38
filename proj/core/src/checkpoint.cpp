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

#include "gpgnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"

namespace gpgnn::nn {
namespace {

using nlohmann::json;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw DataError("checkpoint: truncated header length");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void put_double(std::ostream& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

}  // namespace

Checkpoint snapshot(const ParameterStore& store, std::string meta_json) {
  Checkpoint ck;
  ck.meta_json = std::move(meta_json);
  for (const auto& [name, p] : store.entries()) {
    ck.tensors.emplace(
        name, CheckpointTensor{p.tensor.shape(),
                               {p.tensor.values().begin(), p.tensor.values().end()},
                               p.trainable,
                               p.frozen_rows});
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path,
                      const Checkpoint& checkpoint) {
  json header;
  header["version"] = kCheckpointVersion;
  header["meta"] = json::parse(checkpoint.meta_json);
  json tensors = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : checkpoint.tensors) {
    tensors[name] = {{"shape", t.shape},
                     {"offset", offset},
                     {"trainable", t.trainable},
                     {"frozen_rows", t.frozen_rows}};
    offset += t.values.size() * sizeof(double);
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, t] : checkpoint.tensors) {
    for (double d : t.values) put_double(out, d);
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  const std::uint64_t n = get_u64(in);
  if (!in || n > file_size - sizeof(std::uint64_t)) {
    throw DataError("checkpoint: bad header length in " + path.string());
  }
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) {
    throw DataError("checkpoint: truncated header");
  }
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("version", "") != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version '" +
                    header.value("version", "") + "'");
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  Checkpoint ck;
  ck.meta_json = header.value("meta", json::object()).dump();
  try {
    for (const auto& [name, entry] : header.at("tensors").items()) {
      CheckpointTensor t;
      t.shape = entry.at("shape").get<ad::Shape>();
      t.trainable = entry.value("trainable", true);
      t.frozen_rows = entry.value("frozen_rows", std::vector<std::size_t>{});
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t count = ad::shape_numel(t.shape);
      if (offset + count * sizeof(double) > payload.size()) {
        throw DataError("checkpoint: tensor '" + name + "' exceeds payload");
      }
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        const auto* b =
            reinterpret_cast<const unsigned char*>(payload.data() + offset + 8 * i);
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        t.values[i] = std::bit_cast<double>(bits);
      }
      ck.tensors.emplace(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad tensor entry: ") + e.what());
  }
  return ck;
}

void restore(ParameterStore& store, const Checkpoint& checkpoint) {
  if (checkpoint.tensors.size() != store.size()) {
    throw DataError("checkpoint holds " +
                    std::to_string(checkpoint.tensors.size()) +
                    " tensors, model expects " + std::to_string(store.size()));
  }
  for (auto& [name, p] : store.entries()) {
    auto it = checkpoint.tensors.find(name);
    if (it == checkpoint.tensors.end()) {
      throw DataError("checkpoint is missing '" + name + "'");
    }
    if (it->second.shape != p.tensor.shape()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      ad::shape_string(it->second.shape) + ", model expects " +
                      ad::shape_string(p.tensor.shape()));
    }
    std::ranges::copy(it->second.values, p.tensor.mutable_values().begin());
  }
}

}  // namespace gpgnn::nn
