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
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gpgnn {

inline constexpr const char* kNoRelation = "NA";
inline constexpr std::size_t kNoRelationIndex = 0;

/// relation -> inverse relation. Stored symmetrically closed.
using InverseMap = std::map<std::string, std::string>;

/// Adds the mirror of every entry and rejects NA or conflicting pairs.
InverseMap close_inverse_map(const InverseMap& raw);
InverseMap load_inverse_map(const std::filesystem::path& path);
std::string inverse_map_json(const InverseMap& map);

/// Relation name <-> class index. Index 0 is always "NA".
class RelationVocab {
 public:
  RelationVocab();
  explicit RelationVocab(std::vector<std::string> names,
                         InverseMap inverses = {});

  static RelationVocab load(const std::filesystem::path& path,
                            InverseMap inverses = {});
  std::string to_json() const;

  std::size_t size() const { return names_.size(); }
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index(const std::string& name) const;
  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::string> inverse(const std::string& name) const;
  const InverseMap& inverses() const { return inverses_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  InverseMap inverses_;
};

}  // namespace gpgnn
