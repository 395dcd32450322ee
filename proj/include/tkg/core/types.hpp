#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace tkg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
/// Normalized snapshot index (raw timestamp / dataset interval, re-indexed).
using Time = std::int32_t;
using QueryId = std::uint64_t;

struct Quadruple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  Time time = 0;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

enum class Direction : std::uint8_t { forward, inverse };

constexpr std::string_view to_string(Direction d) {
  return d == Direction::forward ? "forward" : "inverse";
}

/// An open question (s, r, ?, t). `answer` is absent for pure inference.
struct Query {
  QueryId id = 0;
  EntityId subject = 0;
  RelationId relation = 0;
  Time time = 0;
  std::optional<EntityId> answer;
  Direction direction = Direction::forward;
};

/// One hop in the bidirectional adjacency: the edge (owner, relation, other, time).
/// Relation ids live in the augmented space [0, 2|R|).
struct Edge {
  RelationId relation = 0;
  EntityId other = 0;
  Time time = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

}  // namespace tkg
