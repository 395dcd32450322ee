#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "tkg/core/temporal_kg.hpp"
#include "tkg/rules/rule_store.hpp"

namespace tkg::retrieval {

enum class Strategy : std::uint8_t { entity_key, rule_based };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct RetrievalConfig {
  Strategy strategy = Strategy::entity_key;
  std::size_t history_budget = 50;
  double min_rule_confidence = 0.0;
};

/// Up to `budget` facts about query.subject: (subject, relation) matches
/// first, then subject-only matches, most recent first within each tier.
/// Returned time-ascending for prompt layout.
std::vector<Quadruple> retrieve_entity_key(const HistoryView& history, const Query& query,
                                           std::size_t budget);

/// Facts (subject, r', ., .) where r' opens the body of a rule with head
/// query.relation and confidence >= min_confidence. Falls back to
/// retrieve_entity_key when no rule qualifies or nothing matches.
std::vector<Quadruple> retrieve_rule_based(const HistoryView& history, const Query& query,
                                           const rules::RuleStore& store, std::size_t budget,
                                           double min_confidence);

/// Dispatches on config.strategy. `store` may be null for entity_key.
std::vector<Quadruple> retrieve(const HistoryView& history, const Query& query,
                                const RetrievalConfig& config, const rules::RuleStore* store);

}  // namespace tkg::retrieval
