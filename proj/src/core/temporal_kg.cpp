#include "tkg/core/temporal_kg.hpp"

#include <algorithm>
#include <tuple>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "tkg/core/error.hpp"

namespace tkg {

namespace {

bool time_desc(const Edge& a, const Edge& b) {
  if (a.time != b.time) return a.time > b.time;
  if (a.relation != b.relation) return a.relation < b.relation;
  return a.other < b.other;
}

std::uint64_t relation_key(EntityId e, RelationId r) {
  return (static_cast<std::uint64_t>(e) << 32) | r;
}

bool time_ascending(const Quadruple& a, const Quadruple& b) {
  return std::tie(a.time, a.subject, a.relation, a.object) <
         std::tie(b.time, b.subject, b.relation, b.object);
}

}  // namespace

TemporalKG::TemporalKG(std::size_t entity_count, std::size_t relation_count,
                       std::vector<Quadruple> facts)
    : entity_count_(entity_count), relation_count_(relation_count), facts_(std::move(facts)) {
  for (const auto& q : facts_) {
    if (q.subject >= entity_count_ || q.object >= entity_count_) {
      throw DataError("entity id out of range in fact (" + std::to_string(q.subject) + ", " +
                      std::to_string(q.relation) + ", " + std::to_string(q.object) + ", " +
                      std::to_string(q.time) + ")");
    }
    if (q.relation >= relation_count_) {
      throw DataError("relation id " + std::to_string(q.relation) + " out of range (|R| = " +
                      std::to_string(relation_count_) + ")");
    }
    if (q.time < 0) throw DataError("negative snapshot index");
  }
  std::sort(facts_.begin(), facts_.end(), time_ascending);
  const auto before = facts_.size();
  facts_.erase(std::unique(facts_.begin(), facts_.end()), facts_.end());
  duplicates_removed_ = before - facts_.size();
  build_indices();
}

void TemporalKG::build_indices() {
  const Time horizon = facts_.empty() ? 0 : facts_.back().time + 1;
  snapshot_offsets_.assign(static_cast<std::size_t>(horizon) + 1, 0);
  for (const auto& q : facts_) ++snapshot_offsets_[static_cast<std::size_t>(q.time) + 1];
  for (std::size_t i = 1; i < snapshot_offsets_.size(); ++i) {
    snapshot_offsets_[i] += snapshot_offsets_[i - 1];
  }

  // Subject index over the materialized facts.
  subject_offsets_.assign(entity_count_ + 1, 0);
  for (const auto& q : facts_) ++subject_offsets_[q.subject + 1];
  for (std::size_t i = 1; i < subject_offsets_.size(); ++i) {
    subject_offsets_[i] += subject_offsets_[i - 1];
  }
  subject_index_.assign(facts_.size(), 0);
  {
    auto cursor = subject_offsets_;
    // Walk facts newest-first so each bucket ends up time-descending.
    for (std::size_t i = facts_.size(); i-- > 0;) {
      subject_index_[cursor[facts_[i].subject]++] = static_cast<std::uint32_t>(i);
    }
  }

  // Bidirectional adjacency from base facts.
  const auto base = static_cast<RelationId>(relation_count_);
  std::vector<std::pair<EntityId, Edge>> owned;
  owned.reserve(2 * facts_.size());
  for (const auto& q : facts_) {
    if (q.relation >= base) continue;
    owned.push_back({q.subject, Edge{q.relation, q.object, q.time}});
    owned.push_back({q.object, Edge{q.relation + base, q.subject, q.time}});
  }

  adjacency_offsets_.assign(entity_count_ + 1, 0);
  for (const auto& [owner, edge] : owned) ++adjacency_offsets_[owner + 1];
  for (std::size_t i = 1; i < adjacency_offsets_.size(); ++i) {
    adjacency_offsets_[i] += adjacency_offsets_[i - 1];
  }
  adjacency_.assign(owned.size(), Edge{});
  {
    auto cursor = adjacency_offsets_;
    for (const auto& [owner, edge] : owned) adjacency_[cursor[owner]++] = edge;
  }
  for (std::size_t e = 0; e < entity_count_; ++e) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(adjacency_offsets_[e]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(adjacency_offsets_[e + 1]),
              time_desc);
  }

  // (entity, relation) index: stable partition of each adjacency bucket by relation.
  by_relation_ = adjacency_;
  by_relation_ranges_.clear();
  for (std::size_t e = 0; e < entity_count_; ++e) {
    auto first = by_relation_.begin() + static_cast<std::ptrdiff_t>(adjacency_offsets_[e]);
    auto last = by_relation_.begin() + static_cast<std::ptrdiff_t>(adjacency_offsets_[e + 1]);
    std::stable_sort(first, last,
                     [](const Edge& a, const Edge& b) { return a.relation < b.relation; });
    for (auto it = first; it != last;) {
      auto run_end = std::find_if(it, last, [&](const Edge& x) { return x.relation != it->relation; });
      by_relation_ranges_[relation_key(static_cast<EntityId>(e), it->relation)] = {
          static_cast<std::size_t>(it - by_relation_.begin()),
          static_cast<std::size_t>(run_end - by_relation_.begin())};
      it = run_end;
    }
  }
}

TemporalKG TemporalKG::augment_inverse() const {
  if (augmented_) throw Error("graph is already augmented with inverse relations");
  TemporalKG out;
  out.entity_count_ = entity_count_;
  out.relation_count_ = relation_count_;
  out.augmented_ = true;
  out.duplicates_removed_ = duplicates_removed_;
  out.facts_.reserve(2 * facts_.size());
  const auto base = static_cast<RelationId>(relation_count_);
  for (const auto& q : facts_) {
    out.facts_.push_back(q);
    out.facts_.push_back(Quadruple{q.object, q.relation + base, q.subject, q.time});
  }
  std::sort(out.facts_.begin(), out.facts_.end(), time_ascending);
  out.build_indices();
  return out;
}

std::span<const Quadruple> TemporalKG::snapshot(Time t) const {
  if (t < 0 || t >= time_count()) return {};
  const auto i = static_cast<std::size_t>(t);
  return std::span(facts_).subspan(snapshot_offsets_[i], snapshot_offsets_[i + 1] - snapshot_offsets_[i]);
}

std::span<const Quadruple> TemporalKG::facts_before(Time t) const {
  if (t <= 0) return {};
  const auto i = static_cast<std::size_t>(std::min(t, time_count()));
  return std::span(facts_).first(snapshot_offsets_[i]);
}

std::span<const std::uint32_t> TemporalKG::facts_by_subject(EntityId s) const {
  if (s >= entity_count_) return {};
  return std::span(subject_index_).subspan(subject_offsets_[s], subject_offsets_[s + 1] - subject_offsets_[s]);
}

std::span<const Edge> TemporalKG::edges_from(EntityId e) const {
  if (e >= entity_count_) return {};
  return std::span(adjacency_).subspan(adjacency_offsets_[e], adjacency_offsets_[e + 1] - adjacency_offsets_[e]);
}

std::span<const Edge> TemporalKG::edges_from(EntityId e, RelationId r) const {
  const auto it = by_relation_ranges_.find(relation_key(e, r));
  if (it == by_relation_ranges_.end()) return {};
  return std::span(by_relation_).subspan(it->second.first, it->second.second - it->second.first);
}

HistoryView TemporalKG::history_before(Time t) const { return HistoryView(*this, t); }

std::vector<Quadruple> TemporalKG::base_facts() const {
  std::vector<Quadruple> out;
  out.reserve(augmented_ ? facts_.size() / 2 : facts_.size());
  for (const auto& q : facts_) {
    if (q.relation < relation_count_) out.push_back(q);
  }
  return out;
}

HistoryView HistoryView::last(Time window) const {
  return HistoryView(*graph_, end_, std::max(begin_, end_ - window));
}

std::span<const Quadruple> HistoryView::facts() const {
  const auto upto = graph_->facts_before(end_);
  const auto skip = graph_->facts_before(begin_).size();
  return upto.subspan(std::min(skip, upto.size()));
}

std::span<const Edge> HistoryView::clip(std::span<const Edge> edges) const {
  // Edges are time-descending: drop the head (>= end) and the tail (< begin).
  const auto first = std::partition_point(edges.begin(), edges.end(),
                                          [this](const Edge& e) { return e.time >= end_; });
  const auto last = std::partition_point(first, edges.end(),
                                         [this](const Edge& e) { return e.time >= begin_; });
  return {first, last};
}

std::span<const Edge> HistoryView::edges_from(EntityId e) const { return clip(graph_->edges_from(e)); }

std::span<const Edge> HistoryView::edges_from(EntityId e, RelationId r) const {
  return clip(graph_->edges_from(e, r));
}

std::span<const std::uint32_t> HistoryView::facts_by_subject(EntityId s) const {
  const auto all = graph_->facts_by_subject(s);
  const auto facts = graph_->facts();
  const auto first = std::partition_point(all.begin(), all.end(),
                                          [&](std::uint32_t i) { return facts[i].time >= end_; });
  const auto last = std::partition_point(first, all.end(),
                                         [&](std::uint32_t i) { return facts[i].time >= begin_; });
  return {first, last};
}

std::vector<EntityId> same_time_filter_set(const TemporalKG& graph, const Query& query) {
  std::vector<EntityId> out;
  const auto edges = graph.edges_from(query.subject, query.relation);
  const auto first = std::partition_point(edges.begin(), edges.end(),
                                          [&](const Edge& e) { return e.time > query.time; });
  for (auto it = first; it != edges.end() && it->time == query.time; ++it) {
    if (!query.answer || it->other != *query.answer) out.push_back(it->other);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void save_graph(const TemporalKG& graph, std::ostream& out) {
  out << "tkg-graph\t1\t" << graph.entity_count() << '\t' << graph.relation_count() << '\t'
      << (graph.augmented() ? 1 : 0) << '\n';
  for (const auto& q : graph.base_facts()) {
    out << q.subject << '\t' << q.relation << '\t' << q.object << '\t' << q.time << '\n';
  }
}

TemporalKG load_graph(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("graph stream is empty");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  int augmented = 0;
  if (!(header >> magic >> version >> entities >> relations >> augmented) || magic != "tkg-graph" ||
      version != 1) {
    throw DataError("bad graph header: " + line);
  }
  std::vector<Quadruple> facts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    Quadruple q;
    if (!(row >> q.subject >> q.relation >> q.object >> q.time)) {
      throw DataError("bad graph record at line " + std::to_string(line_no));
    }
    facts.push_back(q);
  }
  TemporalKG graph(entities, relations, std::move(facts));
  return augmented ? graph.augment_inverse() : graph;
}

}  // namespace tkg
