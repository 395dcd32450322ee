#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tkg/core/distribution.hpp"
#include "tkg/core/temporal_kg.hpp"
#include "tkg/rules/rule_store.hpp"

namespace tkg::rules {

/// A rule body instantiated in the history, starting at the query subject.
struct RuleGrounding {
  std::uint32_t rule = 0;  ///< index into the RuleStore
  EntityId terminal = 0;   ///< e_{l+1}, the candidate answer
  std::vector<Time> body_times;

  Time last_time() const { return body_times.back(); }
};

struct GroundingConfig {
  Time window = 0;                   ///< snapshots before the query to search; 0 = entire history
  std::size_t cap_per_rule = 1000;  ///< most-recent-first cap per (query, rule)
};

/// All groundings of rules with head == query.relation, using only facts in
/// [query.time - window, query.time) of `history`.
std::vector<RuleGrounding> ground_rules(const HistoryView& history, const Query& query,
                                        const RuleStore& store, const GroundingConfig& config = {});

enum class Aggregation : std::uint8_t {
  sum,  ///< every grounding adds its score
  max,  ///< per rule keep the best grounding of each entity, then sum over rules
};

/// score(e) = sum over groundings ending at e of confidence * exp(-lambda (t_q - t_l)),
/// normalized over the scored entities. No groundings -> zero distribution.
EntityDistribution static_score(std::span<const RuleGrounding> groundings, const RuleStore& store,
                                double lambda, Time query_time, Aggregation aggregation = Aggregation::sum);

}  // namespace tkg::rules
