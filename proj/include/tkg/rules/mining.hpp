#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "tkg/core/temporal_kg.hpp"
#include "tkg/rules/rule_store.hpp"

namespace tkg::rules {

struct MiningConfig {
  std::size_t walks_per_length = 200;  ///< walk attempts per head relation and body length
  std::size_t max_body_len = 3;
  double walk_decay = 0.1;  ///< transition weight exp(-walk_decay * dt)
  /// Body groundings are enumerated exhaustively up to this many; beyond it,
  /// this many random body walks are sampled instead.
  std::size_t confidence_samples = 1000;
  std::uint64_t seed = 1;
};

struct MiningStats {
  std::size_t walks_attempted = 0;
  std::size_t walks_closed = 0;
  std::size_t candidate_rules = 0;  ///< distinct (head, body) before confidence estimation
  std::map<RelationId, std::size_t> rules_per_head;
  bool empty_graph = false;
};

/// Mines cyclic rules from `history` by sampling backward temporal random
/// walks for every head relation in the augmented relation space.
/// Deterministic for a fixed seed.
RuleStore mine_rules(const HistoryView& history, const MiningConfig& config, MiningStats* stats = nullptr);

/// Static confidence estimate for a single rule over `history`.
TemporalRule estimate_confidence(const HistoryView& history, RelationId head,
                                 const std::vector<RelationId>& body, std::size_t samples,
                                 std::uint64_t seed);

}  // namespace tkg::rules
