// Copyright 2026 The PerceptionLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "perceptionlab/domain.hpp"

namespace perceptionlab::storage {

enum class Collection { kCampaigns, kFragments, kParticipants, kSessions, kJudgments, kPresentations };

inline constexpr std::array<Collection, 6> kAllCollections = {
    Collection::kCampaigns, Collection::kFragments,  Collection::kParticipants,
    Collection::kSessions,  Collection::kJudgments, Collection::kPresentations};

std::string_view to_string(Collection c);
std::optional<Collection> parse_collection(std::string_view name);

/// Field names a query may reference for documents of `c`.
const std::vector<std::string>& field_names(Collection c);

/// Key of a presentation document: "<session_id>#<trial_index>".
std::string presentation_key(const Uuid& session_id, int trial_index);

struct Predicate {
  enum class Op { kEq, kLt, kLe, kGt, kGe };
  std::string field;
  Op op = Op::kEq;
  Json value;
};

/// Conjunction of predicates. An empty filter matches everything.
using Filter = std::vector<Predicate>;

Predicate eq(std::string field, Json value);
Predicate ge(std::string field, Json value);
Predicate lt(std::string field, Json value);

/// Abstract document store. The JSONL implementation below is the only one
/// shipped; the interface exists so a networked database can be slotted in.
class DocumentStore {
 public:
  virtual ~DocumentStore() = default;

  /// Validates `document` against the collection's schema, enforces id
  /// uniqueness and judgment referential integrity, and returns once the
  /// document is durable.
  virtual std::string insert(Collection c, const Json& document) = 0;
  /// Same contract as insert, applied to every document in order; a single
  /// sync at the end. Stops at the first failing document (earlier ones stay).
  virtual std::vector<std::string> insert_many(Collection c, const std::vector<Json>& documents) = 0;
  virtual std::optional<Json> get(Collection c, std::string_view id) const = 0;
  virtual bool contains(Collection c, std::string_view id) const = 0;
  /// Documents in insertion order; snapshot taken at call time.
  virtual std::vector<Json> query(Collection c, const Filter& filter = {}) const = 0;
  virtual std::size_t size(Collection c) const = 0;
};

/// One append-only `<root>/<collection>.jsonl` file per collection with an
/// in-memory id index rebuilt on open. A trailing line without its LF is a
/// torn append from a crash and is truncated away on open.
class JsonlStore final : public DocumentStore {
 public:
  struct Options {
    bool fsync_on_insert = true;
  };

  explicit JsonlStore(std::filesystem::path root);
  JsonlStore(std::filesystem::path root, Options options);
  ~JsonlStore() override;

  JsonlStore(const JsonlStore&) = delete;
  JsonlStore& operator=(const JsonlStore&) = delete;

  std::string insert(Collection c, const Json& document) override;
  std::vector<std::string> insert_many(Collection c, const std::vector<Json>& documents) override;
  std::optional<Json> get(Collection c, std::string_view id) const override;
  bool contains(Collection c, std::string_view id) const override;
  std::vector<Json> query(Collection c, const Filter& filter = {}) const override;
  std::size_t size(Collection c) const override;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path file_path(Collection c) const;
  /// Bytes dropped from torn tails while opening (0 after a clean shutdown).
  std::size_t recovered_torn_bytes() const { return torn_bytes_; }

 private:
  struct Table {
    mutable std::shared_mutex mu;
    int fd = -1;
    std::vector<Json> docs;
    std::unordered_map<std::string, std::size_t> index;
  };

  Table& table(Collection c) const { return *tables_[static_cast<std::size_t>(c)]; }
  void load(Collection c);
  // Caller holds the table's unique lock.
  std::string prepare(Collection c, const Json& document, Json& canonical_doc) const;
  void append_line(Table& t, const std::string& line);
  void sync(Table& t);

  std::filesystem::path root_;
  Options options_;
  std::array<std::unique_ptr<Table>, kAllCollections.size()> tables_;
  std::size_t torn_bytes_ = 0;
};

/// Extracts the id a document is keyed by in `c` (throws SchemaViolation).
std::string document_id(Collection c, const Json& document);

/// Reads a `.jsonl` file into documents, skipping blank lines. Used for
/// exports handed to analytics and for imports.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace perceptionlab::storage
