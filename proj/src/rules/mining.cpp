#include "tkg/rules/mining.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>

namespace tkg::rules {

namespace {

struct OwnedEdge {
  EntityId owner;
  Edge edge;
};

using RelationEdges = std::vector<std::vector<OwnedEdge>>;

RelationEdges edges_by_relation(const HistoryView& history) {
  const auto base = static_cast<RelationId>(history.graph().relation_count());
  RelationEdges out(2 * static_cast<std::size_t>(base));
  for (const auto& q : history.facts()) {
    if (q.relation >= base) continue;
    out[q.relation].push_back({q.subject, Edge{q.relation, q.object, q.time}});
    out[q.relation + base].push_back({q.object, Edge{q.relation + base, q.subject, q.time}});
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t pick_uniform(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::size_t pick_weighted(const std::vector<double>& weights, std::mt19937_64& rng) {
  double total = 0.0;
  for (const double w : weights) total += w;
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

/// Edges of a time-descending list with time < bound (strict) or <= bound.
std::span<const Edge> earlier(std::span<const Edge> edges, Time bound, bool strict) {
  const auto first = std::partition_point(edges.begin(), edges.end(), [&](const Edge& e) {
    return strict ? e.time >= bound : e.time > bound;
  });
  return {first, edges.end()};
}

/// Edges with time >= bound.
std::span<const Edge> not_before(std::span<const Edge> edges, Time bound) {
  const auto last = std::partition_point(edges.begin(), edges.end(),
                                         [&](const Edge& e) { return e.time >= bound; });
  return {edges.begin(), last};
}

/// Walks backward in time from the head's object and closes the cycle at the
/// head's subject. Returns the body in forward order.
std::optional<std::vector<RelationId>> sample_walk(const HistoryView& history, const OwnedEdge& head,
                                                   std::size_t length, double decay,
                                                   std::mt19937_64& rng) {
  const auto& graph = history.graph();
  const EntityId start = head.owner;
  EntityId node = head.edge.other;
  Time now = head.edge.time;
  std::optional<Edge> arrived_by;  // edge used to reach `node`, stored as seen from the previous node
  EntityId previous = node;

  std::vector<RelationId> steps;
  std::vector<const Edge*> candidates;
  std::vector<double> weights;
  for (std::size_t i = 0; i < length; ++i) {
    candidates.clear();
    weights.clear();
    const bool closing = i + 1 == length;
    for (const auto& e : earlier(history.edges_from(node), now, i == 0)) {
      if (closing && e.other != start) continue;
      if (arrived_by && e.other == previous && e.time == arrived_by->time &&
          e.relation == graph.inverse_of(arrived_by->relation)) {
        continue;
      }
      candidates.push_back(&e);
      weights.push_back(std::exp(-decay * static_cast<double>(now - e.time)));
    }
    if (candidates.empty()) return std::nullopt;
    const Edge& step = *candidates[pick_weighted(weights, rng)];
    steps.push_back(step.relation);
    arrived_by = step;
    previous = node;
    node = step.other;
    now = step.time;
  }

  std::vector<RelationId> body(length);
  for (std::size_t j = 0; j < length; ++j) body[j] = graph.inverse_of(steps[length - 1 - j]);
  return body;
}

struct BodyPath {
  std::vector<std::pair<EntityId, Time>> hops;  // (entity reached, time of the edge)
  EntityId first = 0;

  EntityId last() const { return hops.back().first; }
  Time last_time() const { return hops.back().second; }
  auto key() const { return std::make_pair(first, hops); }
};

bool head_follows(const HistoryView& history, RelationId head, const BodyPath& path) {
  for (const auto& e : history.edges_from(path.first, head)) {
    if (e.time <= path.last_time()) break;
    if (e.other == path.last()) return true;
  }
  return false;
}

/// Enumerates body groundings depth-first. Returns false once more than
/// `limit` paths were found (the output is then incomplete).
bool enumerate_bodies(const HistoryView& history, const std::vector<RelationId>& body,
                      const std::vector<OwnedEdge>& starts, std::size_t limit,
                      std::vector<BodyPath>& out) {
  BodyPath path;
  std::size_t found = 0;
  auto dfs = [&](auto&& self, std::size_t depth, EntityId node, Time now) -> bool {
    if (depth == body.size()) {
      if (++found > limit) return false;
      out.push_back(path);
      return true;
    }
    for (const auto& e : not_before(history.edges_from(node, body[depth]), now)) {
      path.hops.emplace_back(e.other, e.time);
      const bool ok = self(self, depth + 1, e.other, e.time);
      path.hops.pop_back();
      if (!ok) return false;
    }
    return true;
  };
  for (const auto& s : starts) {
    path.first = s.owner;
    path.hops.assign(1, {s.edge.other, s.edge.time});
    if (!dfs(dfs, 1, s.edge.other, s.edge.time)) return false;
  }
  return true;
}

void sample_bodies(const HistoryView& history, const std::vector<RelationId>& body,
                   const std::vector<OwnedEdge>& starts, std::size_t samples, std::mt19937_64& rng,
                   std::vector<BodyPath>& out) {
  std::set<std::pair<EntityId, std::vector<std::pair<EntityId, Time>>>> seen;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto& s = starts[pick_uniform(starts.size(), rng)];
    BodyPath path;
    path.first = s.owner;
    path.hops.emplace_back(s.edge.other, s.edge.time);
    bool complete = true;
    for (std::size_t depth = 1; depth < body.size(); ++depth) {
      const auto next = not_before(history.edges_from(path.last(), body[depth]), path.last_time());
      if (next.empty()) {
        complete = false;
        break;
      }
      const auto& e = next[pick_uniform(next.size(), rng)];
      path.hops.emplace_back(e.other, e.time);
    }
    if (complete && seen.insert(path.key()).second) out.push_back(std::move(path));
  }
}

TemporalRule estimate(const HistoryView& history, const RelationEdges& by_relation, RelationId head,
                      const std::vector<RelationId>& body, std::size_t samples, std::uint64_t seed) {
  TemporalRule rule;
  rule.head = head;
  rule.body = body;
  const auto& starts = by_relation.at(body.front());
  std::vector<BodyPath> paths;
  if (!starts.empty() && !enumerate_bodies(history, body, starts, samples, paths)) {
    paths.clear();
    std::mt19937_64 rng(seed);
    sample_bodies(history, body, starts, samples, rng, paths);
  }
  rule.body_support = paths.size();
  for (const auto& p : paths) {
    if (head_follows(history, head, p)) ++rule.support;
  }
  rule.confidence = (static_cast<double>(rule.support) + 1.0) /
                    (static_cast<double>(rule.body_support) + 2.0);
  return rule;
}

}  // namespace

TemporalRule estimate_confidence(const HistoryView& history, RelationId head,
                                 const std::vector<RelationId>& body, std::size_t samples,
                                 std::uint64_t seed) {
  return estimate(history, edges_by_relation(history), head, body, samples, seed);
}

RuleStore mine_rules(const HistoryView& history, const MiningConfig& config, MiningStats* stats) {
  MiningStats local;
  auto& st = stats ? *stats : local;
  st = MiningStats{};
  const auto by_relation = edges_by_relation(history);
  if (history.fact_count() == 0) {
    st.empty_graph = true;
    return RuleStore{};
  }

  std::vector<TemporalRule> mined;
  for (RelationId head = 0; head < by_relation.size(); ++head) {
    const auto& heads = by_relation[head];
    if (heads.empty()) continue;
    std::mt19937_64 rng(mix_seed(config.seed, head));
    std::set<std::vector<RelationId>> bodies;
    for (std::size_t length = 1; length <= config.max_body_len; ++length) {
      for (std::size_t k = 0; k < config.walks_per_length; ++k) {
        ++st.walks_attempted;
        const auto& start = heads[pick_uniform(heads.size(), rng)];
        if (auto body = sample_walk(history, start, length, config.walk_decay, rng)) {
          ++st.walks_closed;
          bodies.insert(std::move(*body));
        }
      }
    }
    st.candidate_rules += bodies.size();
    std::uint64_t salt = 0;
    for (const auto& body : bodies) {
      auto rule = estimate(history, by_relation, head, body, config.confidence_samples,
                           mix_seed(config.seed, (static_cast<std::uint64_t>(head) << 20) + salt++));
      // A sampled estimate can miss the walk's own grounding; such rules carry no evidence.
      if (rule.support == 0) continue;
      ++st.rules_per_head[head];
      mined.push_back(std::move(rule));
    }
  }
  return RuleStore(std::move(mined));
}

}  // namespace tkg::rules
