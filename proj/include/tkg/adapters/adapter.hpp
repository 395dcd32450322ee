#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "tkg/core/distribution.hpp"
#include "tkg/core/temporal_kg.hpp"
#include "tkg/nn/tape.hpp"
#include "tkg/nn/tensor.hpp"
#include "tkg/rules/grounding.hpp"
#include "tkg/rules/rule_store.hpp"

namespace tkg::adapters {

/// Adapter scores on a tape: `probs[i]` is the probability of `candidates[i]`.
/// No candidates means the zero distribution (and `probs` is unset).
struct TapeScores {
  std::vector<EntityId> candidates;  ///< ascending
  nn::Var probs;

  bool empty() const { return candidates.empty(); }
};

/// A trainable model of P(o | history before t, query).
///
/// Adapters read the full graph but only ever through history_before(query.time).
class Adapter {
 public:
  virtual ~Adapter() = default;

  virtual std::string_view kind() const = 0;
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  /// The (2|R| x d) relation embedding table, shared with the gate.
  nn::Tensor& relation_embeddings() { return params_.get("relation_embeddings"); }

  /// Puts nodes shared by a batch of queries on the tape. Must be called on
  /// every fresh (or cleared) tape before forward().
  virtual void begin_batch(nn::Tape& tape, std::span<const Query> queries) = 0;
  virtual TapeScores forward(nn::Tape& tape, const Query& query) = 0;

  /// Inference on a private tape.
  EntityDistribution score(const Query& query);

 protected:
  nn::ParameterSet params_;
};

/// Support of the adapter's distribution for `query`.
std::vector<EntityId> adapter_candidates(Adapter& adapter, const Query& query);

enum class Similarity : std::uint8_t { cosine, dot };
std::string_view to_string(Similarity s);
Similarity parse_similarity(std::string_view s);

enum class RuleConfidence : std::uint8_t {
  learned,      ///< sim(Emb(r_q), LSTM(body)) + exp(-lambda (t_q - t_l))
  static_conf,  ///< mined confidence * exp(-lambda (t_q - t_l)); reproduces static rule scoring
};

struct RuleAdapterConfig {
  std::size_t dim = 64;
  double lambda = 0.1;
  Similarity similarity = Similarity::cosine;
  RuleConfidence confidence = RuleConfidence::learned;
  rules::GroundingConfig grounding{};
  std::uint64_t seed = 1;
};

/// Rule adapter. Relation embeddings plus a single-layer LSTM over the body
/// relations give every rule a learned similarity to its head; each grounding
/// adds that similarity and a recency term to its terminal entity's score,
/// and the scores are softmax-normalized over the grounded entities.
///
/// Parameters: relation_embeddings (2|R| x d), lstm_w (4d x 2d, gate order
/// i, f, g, o over [x; h]), lstm_b (4d x 1).
class RuleAdapter final : public Adapter {
 public:
  RuleAdapter(const TemporalKG& graph, const rules::RuleStore& store, RuleAdapterConfig config);

  std::string_view kind() const override { return "rule"; }
  const RuleAdapterConfig& config() const { return config_; }

  void begin_batch(nn::Tape& tape, std::span<const Query> queries) override;
  TapeScores forward(nn::Tape& tape, const Query& query) override;

  /// LSTM encoding of a body.
  nn::Var encode_body(nn::Tape& tape, std::span<const RelationId> body);
  /// sim(Emb(head), Emb(body)) of rule `rule`.
  nn::Var rule_similarity(nn::Tape& tape, std::uint32_t rule);
  /// sim + exp(-lambda (query.time - t_l)). Requires t_l <= query.time.
  nn::Var rule_confidence(nn::Tape& tape, std::uint32_t rule, const Query& query, Time t_l);
  double rule_confidence(std::uint32_t rule, const Query& query, Time t_l);

  /// Groundings summarized per (rule, terminal entity).
  struct Evidence {
    std::uint32_t rule = 0;
    EntityId entity = 0;
    std::uint32_t count = 0;  ///< number of groundings
    double decay_sum = 0.0;   ///< sum of exp(-lambda (t_q - t_l)) over them
  };
  const std::vector<Evidence>& evidence(const Query& query);

 private:
  const TemporalKG* graph_;
  const rules::RuleStore* store_;
  RuleAdapterConfig config_;
  std::unordered_map<std::uint32_t, nn::Var> batch_similarity_;
  std::map<std::tuple<EntityId, RelationId, Time>, std::vector<Evidence>> evidence_;
};

enum class GnnScoring : std::uint8_t {
  normalize,  ///< attention mass divided by its total
  softmax,    ///< softmax over per-entity attention sums
};
std::string_view to_string(GnnScoring s);
GnnScoring parse_gnn_scoring(std::string_view s);

struct GnnAdapterConfig {
  std::size_t dim = 64;
  std::size_t hidden = 64;
  std::size_t hops = 2;           ///< L
  std::size_t prune_budget = 50;  ///< M, nodes kept per hop
  std::size_t neighbor_cap = 30;  ///< S, most recent prior events per node
  GnnScoring scoring = GnnScoring::normalize;
  /// Adds <emb(r_q), emb(r')> / sqrt(d) to every edge logit.
  bool relation_prior = true;
  std::uint64_t seed = 1;
};

/// Attention-flow adapter over the temporal neighbourhood of the query
/// subject. Nodes are (entity, time) pairs; starting from (subject, t_q) with
/// attention 1, each hop expands a node (e, t) to its neighbor_cap most recent
/// events (e, r', e', t') with t' < t, scores each edge from the query
/// relation, the edge relation and a time encoding of t - t', normalizes the
/// scores per source node with a softmax, and moves attention along the
/// edges. The prune_budget nodes with most attention survive each hop; an
/// entity's score is the attention summed over its surviving nodes.
///
/// Parameters: relation_embeddings (2|R| x d), time_freq and time_phase
/// (1 x d, encoding cos(freq * dt + phase)), edge_w1 (hidden x 3d, over
/// [emb(r_q); emb(r'); time]), edge_b1 (hidden x 1), edge_w2 (1 x hidden).
class GnnAdapter final : public Adapter {
 public:
  GnnAdapter(const TemporalKG& graph, GnnAdapterConfig config);

  std::string_view kind() const override { return "gnn"; }
  const GnnAdapterConfig& config() const { return config_; }

  void begin_batch(nn::Tape& tape, std::span<const Query> queries) override;
  TapeScores forward(nn::Tape& tape, const Query& query) override;

  /// Logit of an edge with relation `edge_relation` and age `dt` for a query with relation `query_relation`.
  nn::Var edge_logit(nn::Tape& tape, RelationId query_relation, RelationId edge_relation, Time dt);

 private:
  const TemporalKG* graph_;
  GnnAdapterConfig config_;
};

enum class AdapterKind : std::uint8_t { rule, gnn };
std::string_view to_string(AdapterKind k);
AdapterKind parse_adapter_kind(std::string_view s);

enum class GateKind : std::uint8_t { mlp, fixed_half };
std::string_view to_string(GateKind k);
GateKind parse_gate_kind(std::string_view s);

/// Query-conditioned mixing weight w in (0, 1). The MLP gate reads the
/// adapter's embedding of the query relation through tanh and a sigmoid
/// output; its tensors (gate_w1: hidden x d, gate_b1, gate_w2: 1 x hidden,
/// gate_b2) live in the adapter's parameter set.
class Gate {
 public:
  Gate(GateKind kind, Adapter& adapter, std::size_t hidden = 32, std::uint64_t seed = 1);

  GateKind kind() const { return kind_; }
  nn::Var weight(nn::Tape& tape, RelationId relation);
  double weight(RelationId relation);

 private:
  GateKind kind_;
  Adapter* adapter_;
};

}  // namespace tkg::adapters
