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

#include "gpgnn/relations.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "gpgnn/error.hpp"

namespace gpgnn {
namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

InverseMap close_inverse_map(const InverseMap& raw) {
  InverseMap closed;
  auto put = [&closed](const std::string& a, const std::string& b) {
    auto [it, inserted] = closed.emplace(a, b);
    if (!inserted && it->second != b) {
      throw DataError("inverse map is not involutive: '" + a + "' maps to '" +
                      it->second + "' and '" + b + "'");
    }
  };
  for (const auto& [r, inv] : raw) {
    if (r == kNoRelation || inv == kNoRelation) {
      throw DataError("NA cannot have an inverse");
    }
    if (r.empty() || inv.empty()) throw DataError("empty relation name in inverse map");
    put(r, inv);
    put(inv, r);
  }
  return closed;
}

InverseMap load_inverse_map(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_object()) throw DataError(path.string() + ": expected a JSON object");
  InverseMap raw;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw DataError(path.string() + ": inverse of '" + k + "' is not a string");
    raw.emplace(k, v.get<std::string>());
  }
  return close_inverse_map(raw);
}

std::string inverse_map_json(const InverseMap& map) {
  return nlohmann::json(map).dump(2);
}

RelationVocab::RelationVocab() : RelationVocab(std::vector<std::string>{kNoRelation}) {}

RelationVocab::RelationVocab(std::vector<std::string> names, InverseMap inverses)
    : names_(std::move(names)), inverses_(close_inverse_map(inverses)) {
  if (names_.empty() || names_[0] != kNoRelation) {
    throw DataError("relation vocabulary must start with \"NA\"");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw DataError("duplicate relation '" + names_[i] + "'");
    }
  }
}

RelationVocab RelationVocab::load(const std::filesystem::path& path,
                                  InverseMap inverses) {
  const nlohmann::json j = read_json(path);
  if (!j.is_array()) throw DataError(path.string() + ": expected a JSON array");
  std::vector<std::string> names;
  for (const auto& v : j) {
    if (!v.is_string()) throw DataError(path.string() + ": relation names must be strings");
    names.push_back(v.get<std::string>());
  }
  return RelationVocab(std::move(names), std::move(inverses));
}

std::string RelationVocab::to_json() const { return nlohmann::json(names_).dump(); }

std::size_t RelationVocab::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("relation '" + name + "' is not in the vocabulary");
  return it->second;
}

std::optional<std::string> RelationVocab::inverse(const std::string& name) const {
  auto it = inverses_.find(name);
  if (it == inverses_.end()) return std::nullopt;
  return it->second;
}

}  // namespace gpgnn
