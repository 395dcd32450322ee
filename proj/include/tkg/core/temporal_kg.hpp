#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tkg/core/types.hpp"

namespace tkg {

class HistoryView;

/// An immutable temporal knowledge graph.
///
/// Facts are kept time-ascending. Besides the fact list the graph keeps a
/// bidirectional adjacency over the augmented relation space [0, 2|R|):
/// every base fact (s, r, o, t) is reachable both as (s, r, o, t) from s and
/// as (o, r + |R|, s, t) from o, whether or not inverse facts were
/// materialized by augment_inverse(). Walk-based components (rule mining,
/// grounding, the attention adapter) traverse this adjacency.
class TemporalKG {
 public:
  TemporalKG() = default;

  /// `facts` must hold base relations only (relation < relation_count).
  /// Exact duplicates are dropped and counted.
  TemporalKG(std::size_t entity_count, std::size_t relation_count,
             std::vector<Quadruple> facts);

  std::size_t entity_count() const { return entity_count_; }
  /// Base relation count |R| (pre-inverse).
  std::size_t relation_count() const { return relation_count_; }
  /// Size of the relation vocabulary queries may use: 2|R| once augmented.
  std::size_t relation_vocab_size() const {
    return augmented_ ? 2 * relation_count_ : relation_count_;
  }
  bool augmented() const { return augmented_; }
  std::size_t duplicates_removed() const { return duplicates_removed_; }

  RelationId inverse_of(RelationId r) const {
    const auto base = static_cast<RelationId>(relation_count_);
    return r < base ? r + base : r - base;
  }

  /// Adds (o, r + |R|, s, t) for every base fact. Throws on a second call.
  TemporalKG augment_inverse() const;

  std::span<const Quadruple> facts() const { return facts_; }
  std::size_t fact_count() const { return facts_.size(); }
  /// One past the last snapshot index (0 for an empty graph).
  Time time_count() const { return static_cast<Time>(snapshot_offsets_.size()) - 1; }
  std::span<const Quadruple> snapshot(Time t) const;
  std::span<const Quadruple> facts_before(Time t) const;

  /// Indices into facts(), time-descending.
  std::span<const std::uint32_t> facts_by_subject(EntityId s) const;
  /// Bidirectional adjacency of `e`, time-descending then (relation, other) ascending.
  std::span<const Edge> edges_from(EntityId e) const;
  /// Adjacency of `e` restricted to relation `r` (augmented id space).
  std::span<const Edge> edges_from(EntityId e, RelationId r) const;

  HistoryView history_before(Time t) const;

  /// Base facts only (no materialized inverses), time-ascending.
  std::vector<Quadruple> base_facts() const;

 private:
  void build_indices();

  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
  bool augmented_ = false;
  std::size_t duplicates_removed_ = 0;

  std::vector<Quadruple> facts_;
  std::vector<std::size_t> snapshot_offsets_{0};
  std::vector<std::uint32_t> subject_index_;
  std::vector<std::size_t> subject_offsets_;
  std::vector<Edge> adjacency_;
  std::vector<std::size_t> adjacency_offsets_;
  std::vector<Edge> by_relation_;
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> by_relation_ranges_;
};

/// Read-only window [begin, end) over a graph. Every accessor only ever
/// returns facts or edges whose time lies inside the window.
class HistoryView {
 public:
  HistoryView(const TemporalKG& graph, Time end, Time begin = 0)
      : graph_(&graph), begin_(begin), end_(end) {}

  const TemporalKG& graph() const { return *graph_; }
  Time begin() const { return begin_; }
  Time end() const { return end_; }

  /// Narrows the window to [max(begin, end - window), end).
  HistoryView last(Time window) const;

  std::span<const Quadruple> facts() const;
  std::size_t fact_count() const { return facts().size(); }
  std::span<const Edge> edges_from(EntityId e) const;
  std::span<const Edge> edges_from(EntityId e, RelationId r) const;
  std::span<const std::uint32_t> facts_by_subject(EntityId s) const;

 private:
  std::span<const Edge> clip(std::span<const Edge> edges) const;

  const TemporalKG* graph_;
  Time begin_;
  Time end_;
};

/// Objects o' != answer with (s, r, o', t) present in the graph at the query's
/// own timestamp. Sorted ascending.
std::vector<EntityId> same_time_filter_set(const TemporalKG& graph, const Query& query);

/// Plain-text serialization: a header line followed by base facts.
void save_graph(const TemporalKG& graph, std::ostream& out);
TemporalKG load_graph(std::istream& in);

}  // namespace tkg
