#include "tkg/adapters/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tkg/core/error.hpp"

namespace tkg::adapters {

EntityDistribution Adapter::score(const Query& query) {
  nn::Tape tape;
  begin_batch(tape, std::span<const Query>(&query, 1));
  const auto out = forward(tape, query);
  if (out.empty()) return EntityDistribution::zero();
  const auto probs = tape.value(out.probs);
  std::vector<EntityDistribution::Entry> masses;
  masses.reserve(out.candidates.size());
  for (std::size_t i = 0; i < out.candidates.size(); ++i) masses.emplace_back(out.candidates[i], probs[i]);
  return EntityDistribution::from_weights(std::move(masses));
}

std::vector<EntityId> adapter_candidates(Adapter& adapter, const Query& query) {
  return adapter.score(query).support();
}

std::string_view to_string(Similarity s) { return s == Similarity::cosine ? "cosine" : "dot"; }

Similarity parse_similarity(std::string_view s) {
  if (s == "cosine") return Similarity::cosine;
  if (s == "dot") return Similarity::dot;
  throw UsageError("unknown similarity '" + std::string(s) + "' (expected cosine|dot)");
}

// ---------------------------------------------------------------- rule adapter

RuleAdapter::RuleAdapter(const TemporalKG& graph, const rules::RuleStore& store, RuleAdapterConfig config)
    : graph_(&graph), store_(&store), config_(config) {
  if (!(config_.lambda > 0.0)) throw UsageError("rule adapter needs lambda > 0");
  if (config_.dim == 0) throw UsageError("rule adapter needs dim >= 1");
  const std::size_t d = config_.dim;
  std::mt19937_64 rng(config_.seed);
  nn::init_normal(params_.add("relation_embeddings", 2 * graph.relation_count(), d), 1.0, rng);
  nn::init_xavier(params_.add("lstm_w", 4 * d, 2 * d), rng);
  auto& bias = params_.add("lstm_b", 4 * d, 1);
  for (std::size_t i = d; i < 2 * d; ++i) bias.value[i] = 1.0;  // forget gate
}

nn::Var RuleAdapter::encode_body(nn::Tape& tape, std::span<const RelationId> body) {
  const std::size_t d = config_.dim;
  auto& emb = params_.get("relation_embeddings");
  auto& w = params_.get("lstm_w");
  const auto b = tape.param(params_.get("lstm_b"));
  std::optional<nn::Var> h, c;
  for (const auto r : body) {
    auto z = tape.add(tape.matvec(w, tape.row(emb, r), 0), b);
    if (h) z = tape.add(z, tape.matvec(w, *h, d));
    const auto i = tape.sigmoid(tape.slice(z, 0, d));
    const auto g = tape.tanh(tape.slice(z, 2 * d, d));
    const auto o = tape.sigmoid(tape.slice(z, 3 * d, d));
    auto next_c = tape.mul(i, g);
    if (c) next_c = tape.add(next_c, tape.mul(tape.sigmoid(tape.slice(z, d, d)), *c));
    c = next_c;
    h = tape.mul(o, tape.tanh(*c));
  }
  if (!h) throw std::invalid_argument("empty rule body");
  return *h;
}

nn::Var RuleAdapter::rule_similarity(nn::Tape& tape, std::uint32_t rule) {
  const auto& r = (*store_)[rule];
  const auto head = tape.row(relation_embeddings(), r.head);
  const auto body = encode_body(tape, r.body);
  return config_.similarity == Similarity::cosine ? tape.cosine(head, body) : tape.dot(head, body);
}

nn::Var RuleAdapter::rule_confidence(nn::Tape& tape, std::uint32_t rule, const Query& query, Time t_l) {
  if (t_l > query.time) throw std::invalid_argument("rule_confidence needs t_l <= query time");
  const auto sim = rule_similarity(tape, rule);
  return tape.add_const(sim, std::exp(-config_.lambda * static_cast<double>(query.time - t_l)));
}

double RuleAdapter::rule_confidence(std::uint32_t rule, const Query& query, Time t_l) {
  nn::Tape tape;
  return tape.scalar(rule_confidence(tape, rule, query, t_l));
}

const std::vector<RuleAdapter::Evidence>& RuleAdapter::evidence(const Query& query) {
  const auto key = std::make_tuple(query.subject, query.relation, query.time);
  if (const auto it = evidence_.find(key); it != evidence_.end()) return it->second;
  const auto history = graph_->history_before(query.time);
  const auto groundings = rules::ground_rules(history, query, *store_, config_.grounding);
  std::map<std::pair<std::uint32_t, EntityId>, Evidence> merged;
  for (const auto& g : groundings) {
#ifdef TKG_LEAKAGE_CHECKS
    if (g.last_time() >= query.time) throw Error("leakage: grounding at or after the query time");
#endif
    auto& ev = merged[{g.rule, g.terminal}];
    ev.rule = g.rule;
    ev.entity = g.terminal;
    ++ev.count;
    ev.decay_sum += std::exp(-config_.lambda * static_cast<double>(query.time - g.last_time()));
  }
  std::vector<Evidence> out;
  out.reserve(merged.size());
  for (const auto& [k, ev] : merged) out.push_back(ev);
  std::sort(out.begin(), out.end(),
            [](const Evidence& a, const Evidence& b) { return std::tie(a.entity, a.rule) < std::tie(b.entity, b.rule); });
  return evidence_.emplace(key, std::move(out)).first->second;
}

void RuleAdapter::begin_batch(nn::Tape& tape, std::span<const Query> queries) {
  batch_similarity_.clear();
  if (config_.confidence == RuleConfidence::static_conf) return;
  std::vector<RelationId> heads;
  for (const auto& q : queries) heads.push_back(q.relation);
  std::sort(heads.begin(), heads.end());
  heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
  for (const auto head : heads) {
    for (const auto rule : store_->with_head(head)) batch_similarity_.emplace(rule, rule_similarity(tape, rule));
  }
}

TapeScores RuleAdapter::forward(nn::Tape& tape, const Query& query) {
  const auto& ev = evidence(query);
  TapeScores out;
  if (ev.empty()) return out;
  std::vector<nn::Var> scores;
  std::vector<nn::Var> sims;
  std::vector<double> counts;
  for (std::size_t i = 0; i < ev.size();) {
    const EntityId e = ev[i].entity;
    double constant = 0.0;
    sims.clear();
    counts.clear();
    for (; i < ev.size() && ev[i].entity == e; ++i) {
      if (config_.confidence == RuleConfidence::static_conf) {
        constant += (*store_)[ev[i].rule].confidence * ev[i].decay_sum;
        continue;
      }
      constant += ev[i].decay_sum;
      const auto it = batch_similarity_.find(ev[i].rule);
      sims.push_back(it != batch_similarity_.end() ? it->second : rule_similarity(tape, ev[i].rule));
      counts.push_back(static_cast<double>(ev[i].count));
    }
    nn::Var s;
    if (sims.empty()) {
      s = tape.constant(constant);
    } else {
      s = tape.add_const(tape.dot(tape.concat(sims), tape.constant(counts)), constant);
    }
    out.candidates.push_back(e);
    scores.push_back(s);
  }
  out.probs = tape.softmax(tape.concat(scores));
  return out;
}

// ----------------------------------------------------------------- gnn adapter

std::string_view to_string(GnnScoring s) { return s == GnnScoring::normalize ? "normalize" : "softmax"; }

GnnScoring parse_gnn_scoring(std::string_view s) {
  if (s == "normalize") return GnnScoring::normalize;
  if (s == "softmax") return GnnScoring::softmax;
  throw UsageError("unknown gnn scoring '" + std::string(s) + "' (expected normalize|softmax)");
}

GnnAdapter::GnnAdapter(const TemporalKG& graph, GnnAdapterConfig config) : graph_(&graph), config_(config) {
  if (config_.hops < 1 || config_.prune_budget < 1 || config_.neighbor_cap < 1) {
    throw UsageError("gnn adapter needs hops, prune_budget and neighbor_cap >= 1");
  }
  if (config_.dim == 0 || config_.hidden == 0) throw UsageError("gnn adapter needs dim and hidden >= 1");
  const std::size_t d = config_.dim;
  std::mt19937_64 rng(config_.seed);
  nn::init_normal(params_.add("relation_embeddings", 2 * graph.relation_count(), d), 1.0, rng);
  auto& freq = params_.add("time_freq", 1, d);
  for (std::size_t i = 0; i < d; ++i) {
    freq.value[i] = std::pow(10.0, -4.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(d - 1, 1)));
  }
  params_.add("time_phase", 1, d);
  nn::init_xavier(params_.add("edge_w1", config_.hidden, 3 * d), rng);
  params_.add("edge_b1", config_.hidden, 1);
  nn::init_xavier(params_.add("edge_w2", 1, config_.hidden), rng);
}

void GnnAdapter::begin_batch(nn::Tape&, std::span<const Query>) {}

nn::Var GnnAdapter::edge_logit(nn::Tape& tape, RelationId query_relation, RelationId edge_relation, Time dt) {
  const std::size_t d = config_.dim;
  auto& emb = relation_embeddings();
  auto& w1 = params_.get("edge_w1");
  const auto eq = tape.row(emb, query_relation);
  const auto er = tape.row(emb, edge_relation);
  const auto te = tape.cos(tape.add(tape.scale(tape.param(params_.get("time_freq")), static_cast<double>(dt)),
                                    tape.param(params_.get("time_phase"))));
  const std::array<nn::Var, 4> pre{tape.matvec(w1, eq, 0), tape.matvec(w1, er, d), tape.matvec(w1, te, 2 * d),
                                   tape.param(params_.get("edge_b1"))};
  const auto hidden = tape.tanh(tape.sum(pre));
  auto logit = tape.matvec(params_.get("edge_w2"), hidden);
  if (config_.relation_prior) {
    logit = tape.add(logit, tape.scale(tape.dot(eq, er), 1.0 / std::sqrt(static_cast<double>(d))));
  }
  return logit;
}

TapeScores GnnAdapter::forward(nn::Tape& tape, const Query& query) {
  struct Node {
    EntityId entity;
    Time time;
    nn::Var attention;
    double value;
  };
  std::map<std::pair<RelationId, Time>, nn::Var> logits;
  auto logit_for = [&](RelationId r, Time dt) {
    const auto key = std::make_pair(r, dt);
    if (const auto it = logits.find(key); it != logits.end()) return it->second;
    return logits.emplace(key, edge_logit(tape, query.relation, r, dt)).first->second;
  };

  std::vector<Node> frontier{Node{query.subject, query.time, tape.constant(1.0), 1.0}};
  std::map<EntityId, std::vector<nn::Var>> entity_attention;
  std::vector<nn::Var> edge_logits;
  for (std::size_t hop = 0; hop < config_.hops && !frontier.empty(); ++hop) {
    std::map<std::pair<EntityId, Time>, std::vector<nn::Var>> incoming;
    for (const auto& node : frontier) {
      auto edges = HistoryView(*graph_, node.time).edges_from(node.entity);
      if (edges.empty()) continue;
      if (edges.size() > config_.neighbor_cap) edges = edges.first(config_.neighbor_cap);
      edge_logits.clear();
      for (const auto& e : edges) {
#ifdef TKG_LEAKAGE_CHECKS
        if (e.time >= query.time) throw Error("leakage: attention edge at or after the query time");
#endif
        edge_logits.push_back(logit_for(e.relation, node.time - e.time));
      }
      const auto flow = tape.mul_scalar(tape.softmax(tape.concat(edge_logits)), node.attention);
      for (std::size_t k = 0; k < edges.size(); ++k) {
        incoming[{edges[k].other, edges[k].time}].push_back(tape.element(flow, k));
      }
    }
    std::vector<Node> next;
    next.reserve(incoming.size());
    for (const auto& [key, parts] : incoming) {
      const auto att = parts.size() == 1 ? parts[0] : tape.sum(parts);
      next.push_back(Node{key.first, key.second, att, tape.scalar(att)});
    }
    std::stable_sort(next.begin(), next.end(), [](const Node& a, const Node& b) { return a.value > b.value; });
    if (next.size() > config_.prune_budget) next.resize(config_.prune_budget);
    for (const auto& n : next) entity_attention[n.entity].push_back(n.attention);
    frontier = std::move(next);
  }

  TapeScores out;
  if (entity_attention.empty()) return out;
  std::vector<nn::Var> scores;
  for (const auto& [e, parts] : entity_attention) {
    out.candidates.push_back(e);
    scores.push_back(parts.size() == 1 ? parts[0] : tape.sum(parts));
  }
  const auto all = tape.concat(scores);
  out.probs = config_.scoring == GnnScoring::normalize ? tape.normalize(all) : tape.softmax(all);
  return out;
}

// ------------------------------------------------------------------------ gate

std::string_view to_string(AdapterKind k) { return k == AdapterKind::rule ? "rule" : "gnn"; }

AdapterKind parse_adapter_kind(std::string_view s) {
  if (s == "rule") return AdapterKind::rule;
  if (s == "gnn") return AdapterKind::gnn;
  throw UsageError("unknown adapter '" + std::string(s) + "' (expected rule|gnn)");
}

std::string_view to_string(GateKind k) { return k == GateKind::mlp ? "mlp" : "fixed"; }

GateKind parse_gate_kind(std::string_view s) {
  if (s == "mlp") return GateKind::mlp;
  if (s == "fixed" || s == "fixed_half") return GateKind::fixed_half;
  throw UsageError("unknown gate '" + std::string(s) + "' (expected mlp|fixed)");
}

Gate::Gate(GateKind kind, Adapter& adapter, std::size_t hidden, std::uint64_t seed)
    : kind_(kind), adapter_(&adapter) {
  if (kind_ != GateKind::mlp) return;
  auto& params = adapter.params();
  if (params.contains("gate_w1")) return;
  const std::size_t d = adapter.relation_embeddings().cols;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  nn::init_xavier(params.add("gate_w1", hidden, d), rng);
  params.add("gate_b1", hidden, 1);
  nn::init_xavier(params.add("gate_w2", 1, hidden), rng);
  params.add("gate_b2", 1, 1);
}

nn::Var Gate::weight(nn::Tape& tape, RelationId relation) {
  if (kind_ == GateKind::fixed_half) return tape.constant(0.5);
  auto& params = adapter_->params();
  const auto x = tape.row(adapter_->relation_embeddings(), relation);
  const auto h = tape.tanh(tape.add(tape.matvec(params.get("gate_w1"), x), tape.param(params.get("gate_b1"))));
  return tape.sigmoid(tape.add(tape.matvec(params.get("gate_w2"), h), tape.param(params.get("gate_b2"))));
}

double Gate::weight(RelationId relation) {
  nn::Tape tape;
  return tape.scalar(weight(tape, relation));
}

}  // namespace tkg::adapters
