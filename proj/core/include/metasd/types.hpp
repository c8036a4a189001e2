#pragma once
// Shared vocabulary / triple / split types for the embedding trainer.

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace metasd {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Dense, first-appearance-order string<->id maps.  relation_count is the
// number of *original* relations; reciprocal ids live in
// [relation_count, 2*relation_count) and have no names here.
struct Vocab {
  std::unordered_map<std::string, EntityId> entity_to_id;
  std::unordered_map<std::string, RelationId> relation_to_id;
  std::vector<std::string> entity_names;   // id -> name
  std::vector<std::string> relation_names; // id -> name

  std::size_t entity_count() const { return entity_names.size(); }
  std::size_t relation_count() const { return relation_names.size(); }

  EntityId entity_id(const std::string& name) const;
  RelationId relation_id(const std::string& name) const;
};

struct SplitData {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::vector<Triple> quiz;
};

// (head, rel) -> set of tails known true across train+valid+test of the
// reciprocal-augmented graph.  Immutable after construction.
struct FilterIndex {
  std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> answers;

  const std::set<EntityId>* find(EntityId head, RelationId rel) const {
    auto it = answers.find({head, rel});
    return it == answers.end() ? nullptr : &it->second;
  }
};

} // namespace metasd
