#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tkg/core/types.hpp"

namespace tkg {

/// Sparse probability mass over entity ids, kept sorted by entity id.
///
/// Either a valid distribution (all masses > 0, total 1) or the explicit zero
/// distribution (empty support), which stands for "no prediction".
class EntityDistribution {
 public:
  using Entry = std::pair<EntityId, double>;

  EntityDistribution() = default;

  static EntityDistribution zero() { return {}; }
  static EntityDistribution point_mass(EntityId e) { return from_normalized({{e, 1.0}}); }
  /// Normalizes non-negative weights; non-positive weights are dropped.
  /// All-zero input yields the zero distribution.
  static EntityDistribution from_weights(std::vector<Entry> weights);
  /// softmax over per-entity scores.
  static EntityDistribution from_scores(std::vector<Entry> scores);
  /// Takes masses as given (must already be normalized); duplicate ids are summed.
  static EntityDistribution from_normalized(std::vector<Entry> masses);

  bool is_zero() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::span<const Entry> entries() const { return entries_; }
  double mass(EntityId e) const;
  double total() const;
  std::vector<EntityId> support() const;
  /// Highest-mass entity, smallest id on ties.
  std::optional<EntityId> argmax() const;

  friend bool operator==(const EntityDistribution&, const EntityDistribution&) = default;

 private:
  explicit EntityDistribution(std::vector<Entry> entries) : entries_(std::move(entries)) {}
  std::vector<Entry> entries_;
};

}  // namespace tkg
