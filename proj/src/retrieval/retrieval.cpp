#include "tkg/retrieval/retrieval.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

#include "tkg/core/error.hpp"

namespace tkg::retrieval {

std::string_view to_string(Strategy s) {
  return s == Strategy::entity_key ? "entity_key" : "rule_based";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "entity_key") return Strategy::entity_key;
  if (s == "rule_based") return Strategy::rule_based;
  throw UsageError("unknown retrieval strategy '" + std::string(s) + "' (expected entity_key|rule_based)");
}

namespace {

bool more_recent(const Quadruple& a, const Quadruple& b) {
  if (a.time != b.time) return a.time > b.time;
  return std::tie(a.relation, a.object) < std::tie(b.relation, b.object);
}

bool prompt_order(const Quadruple& a, const Quadruple& b) {
  return std::tie(a.time, a.relation, a.object) < std::tie(b.time, b.relation, b.object);
}

HistoryView clipped(const HistoryView& history, const Query& query) {
  return HistoryView(history.graph(), std::min(history.end(), query.time), history.begin());
}

std::vector<Quadruple> subject_facts(const HistoryView& view, EntityId subject) {
  std::vector<Quadruple> out;
  const auto facts = view.graph().facts();
  for (const auto i : view.facts_by_subject(subject)) out.push_back(facts[i]);
  std::sort(out.begin(), out.end(), more_recent);
  return out;
}

std::vector<Quadruple> finish(std::vector<Quadruple> picked, const Query& query) {
  std::sort(picked.begin(), picked.end(), prompt_order);
#ifdef TKG_LEAKAGE_CHECKS
  for (const auto& q : picked) {
    if (q.time >= query.time) {
      throw std::logic_error("retrieval leaked a fact at t=" + std::to_string(q.time) +
                             " for a query at t=" + std::to_string(query.time));
    }
  }
#else
  (void)query;
#endif
  return picked;
}

}  // namespace

std::vector<Quadruple> retrieve_entity_key(const HistoryView& history, const Query& query,
                                           std::size_t budget) {
  const auto candidates = subject_facts(clipped(history, query), query.subject);
  std::vector<Quadruple> picked;
  for (const auto& q : candidates) {
    if (picked.size() >= budget) break;
    if (q.relation == query.relation) picked.push_back(q);
  }
  for (const auto& q : candidates) {
    if (picked.size() >= budget) break;
    if (q.relation != query.relation) picked.push_back(q);
  }
  return finish(std::move(picked), query);
}

std::vector<Quadruple> retrieve_rule_based(const HistoryView& history, const Query& query,
                                           const rules::RuleStore& store, std::size_t budget,
                                           double min_confidence) {
  std::set<RelationId> relations;
  for (const auto i : store.with_head(query.relation)) {
    if (store[i].confidence >= min_confidence) relations.insert(store[i].body.front());
  }
  if (relations.empty()) return retrieve_entity_key(history, query, budget);

  std::vector<Quadruple> picked;
  for (const auto& q : subject_facts(clipped(history, query), query.subject)) {
    if (picked.size() >= budget) break;
    if (relations.contains(q.relation)) picked.push_back(q);
  }
  if (picked.empty()) return retrieve_entity_key(history, query, budget);
  return finish(std::move(picked), query);
}

std::vector<Quadruple> retrieve(const HistoryView& history, const Query& query,
                                const RetrievalConfig& config, const rules::RuleStore* store) {
  if (config.history_budget < 1) throw UsageError("history budget must be >= 1");
  if (config.strategy == Strategy::rule_based) {
    if (store == nullptr) throw MissingArtifactError("rule_based retrieval needs a mined rule store");
    return retrieve_rule_based(history, query, *store, config.history_budget, config.min_rule_confidence);
  }
  return retrieve_entity_key(history, query, config.history_budget);
}

}  // namespace tkg::retrieval
