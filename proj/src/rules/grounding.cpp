#include "tkg/rules/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tkg::rules {

std::vector<RuleGrounding> ground_rules(const HistoryView& history, const Query& query,
                                        const RuleStore& store, const GroundingConfig& config) {
  std::vector<RuleGrounding> out;
  if (query.time <= 0) return out;
  HistoryView view(history.graph(), std::min(history.end(), query.time), history.begin());
  if (config.window > 0) view = view.last(config.window);

  std::vector<Time> times;
  for (const auto index : store.with_head(query.relation)) {
    const auto& body = store[index].body;
    std::size_t produced = 0;
    auto dfs = [&](auto&& self, std::size_t depth, EntityId node, Time after) -> bool {
      if (depth == body.size()) {
        out.push_back(RuleGrounding{index, node, times});
        return ++produced < config.cap_per_rule;
      }
      for (const auto& e : view.edges_from(node, body[depth])) {
        if (e.time < after) break;  // time-descending: the rest is earlier still
        times.push_back(e.time);
        const bool more = self(self, depth + 1, e.other, e.time);
        times.pop_back();
        if (!more) return false;
      }
      return true;
    };
    times.clear();
    dfs(dfs, 0, query.subject, view.begin());
  }
  return out;
}

EntityDistribution static_score(std::span<const RuleGrounding> groundings, const RuleStore& store,
                                double lambda, Time query_time, Aggregation aggregation) {
  if (!(lambda > 0.0)) throw std::invalid_argument("static_score: lambda must be positive");
  std::map<EntityId, double> scores;
  std::map<std::pair<std::uint32_t, EntityId>, double> best;
  for (const auto& g : groundings) {
    const double s = store[g.rule].confidence *
                     std::exp(-lambda * static_cast<double>(query_time - g.last_time()));
    if (aggregation == Aggregation::sum) {
      scores[g.terminal] += s;
    } else {
      auto& b = best[{g.rule, g.terminal}];
      b = std::max(b, s);
    }
  }
  for (const auto& [key, s] : best) scores[key.second] += s;
  std::vector<EntityDistribution::Entry> weights(scores.begin(), scores.end());
  return EntityDistribution::from_weights(std::move(weights));
}

}  // namespace tkg::rules
