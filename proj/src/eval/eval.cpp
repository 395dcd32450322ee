#include "tkg/eval/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tkg/core/error.hpp"

namespace tkg::eval {

std::size_t filtered_rank(const EntityDistribution& scores, EntityId answer, std::span<const EntityId> filter,
                          std::size_t entity_count) {
  auto filtered = [&](EntityId e) { return e != answer && std::find(filter.begin(), filter.end(), e) != filter.end(); };
  const double target = scores.mass(answer);
  std::size_t greater = 0;
  std::size_t ties = 0;
  std::size_t scored = 0;
  for (const auto& [e, p] : scores.entries()) {
    if (e == answer || filtered(e)) continue;
    ++scored;
    if (p > target) {
      ++greater;
    } else if (p == target) {
      ++ties;
    }
  }
  if (target == 0.0) {
    std::vector<EntityId> removed(filter.begin(), filter.end());
    std::sort(removed.begin(), removed.end());
    removed.erase(std::unique(removed.begin(), removed.end()), removed.end());
    std::erase_if(removed, [&](EntityId e) { return e == answer || e >= entity_count; });
    ties = entity_count - 1 - removed.size() - scored;
  }
  return 1 + greater + ties / 2;
}

HitsSummary summarize(std::span<const RankRecord> ranks) {
  HitsSummary s;
  s.queries = ranks.size();
  if (ranks.empty()) return s;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  for (const auto& r : ranks) {
    h1 += r.rank <= 1;
    h3 += r.rank <= 3;
    h10 += r.rank <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  s.hits1 = static_cast<double>(h1) / n;
  s.hits3 = static_cast<double>(h3) / n;
  s.hits10 = static_cast<double>(h10) / n;
  return s;
}

MetricsReport evaluate(const TemporalKG& graph, std::span<const Query> queries, const System& system,
                       std::vector<RankRecord>* ranks) {
  std::vector<RankRecord> all;
  all.reserve(queries.size());
  for (const auto& q : queries) {
    if (!q.answer) throw UsageError("query " + std::to_string(q.id) + " has no answer to evaluate against");
    const auto prediction = system(q);
    const auto filter = same_time_filter_set(graph, q);
    RankRecord r;
    r.qid = q.id;
    r.rank = filtered_rank(prediction.fused, *q.answer, filter, graph.entity_count());
    r.llm_candidates = prediction.llm_candidates;
    r.adapter_candidates = prediction.adapter_candidates;
    r.union_candidates = prediction.fused.size();
    r.direction = q.direction;
    all.push_back(r);
  }
  MetricsReport report;
  report.overall = summarize(all);
  std::vector<RankRecord> fwd, inv;
  for (const auto& r : all) (r.direction == Direction::forward ? fwd : inv).push_back(r);
  report.forward = summarize(fwd);
  report.inverse = summarize(inv);
  if (ranks) *ranks = std::move(all);
  return report;
}

namespace {

nlohmann::ordered_json to_json(const HitsSummary& s) {
  nlohmann::ordered_json j;
  j["queries"] = s.queries;
  j["hits@1"] = s.hits1;
  j["hits@3"] = s.hits3;
  j["hits@10"] = s.hits10;
  return j;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["split"] = split;
  j["config_hash"] = config_hash;
  j["overall"] = eval::to_json(overall);
  j["forward"] = eval::to_json(forward);
  j["inverse"] = eval::to_json(inverse);
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "mode: " << mode << "  split: " << split << "  config: " << config_hash << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "direction", "queries", "hits@1", "hits@3", "hits@10");
  out << line;
  const std::pair<const char*, const HitsSummary*> rows[] = {
      {"forward", &forward}, {"inverse", &inverse}, {"overall", &overall}};
  for (const auto& [name, s] : rows) {
    std::snprintf(line, sizeof line, "%-10s %8zu %8s %8s %8s\n", name, s->queries, fixed(s->hits1).c_str(),
                  fixed(s->hits3).c_str(), fixed(s->hits10).c_str());
    out << line;
  }
  return out.str();
}

void write_ranks(std::span<const RankRecord> ranks, std::ostream& out) {
  for (const auto& r : ranks) {
    nlohmann::ordered_json j;
    j["qid"] = r.qid;
    j["rank"] = r.rank;
    j["llm_candidates"] = r.llm_candidates;
    j["adapter_candidates"] = r.adapter_candidates;
    j["union_candidates"] = r.union_candidates;
    j["direction"] = std::string(to_string(r.direction));
    out << j.dump() << '\n';
  }
}

std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::no_bsl: return "no_bsl";
    case AblationMode::no_adapter: return "no_adapter";
    case AblationMode::adapter_only: return "adapter_only";
    case AblationMode::tlogic_static: return "tlogic_static";
  }
  return "?";
}

AblationMode parse_ablation_mode(std::string_view s) {
  for (const auto m : {AblationMode::full, AblationMode::no_bsl, AblationMode::no_adapter, AblationMode::adapter_only,
                       AblationMode::tlogic_static}) {
    if (s == to_string(m)) return m;
  }
  throw UsageError("unknown eval mode '" + std::string(s) +
                   "' (expected full|no_bsl|no_adapter|adapter_only|tlogic_static)");
}

System make_system(AblationMode mode, const AblationInputs& in) {
  std::vector<std::string> missing;
  const bool needs_beam = mode == AblationMode::full || mode == AblationMode::no_adapter;
  const bool needs_iterative = mode == AblationMode::no_bsl;
  const bool needs_adapter =
      mode == AblationMode::full || mode == AblationMode::no_bsl || mode == AblationMode::adapter_only;
  if (!in.dataset) missing.emplace_back("dataset");
  if (needs_beam && !in.beam_cache) missing.emplace_back("beam cache (run precompute)");
  if (needs_iterative && !in.iterative_cache) missing.emplace_back("iterative cache (run precompute --generation iterative)");
  if (needs_adapter && !in.adapter) missing.emplace_back("adapter checkpoint (run train)");
  if ((mode == AblationMode::full || mode == AblationMode::no_bsl) && !in.gate) missing.emplace_back("gate");
  if (mode == AblationMode::tlogic_static && !in.rules) missing.emplace_back("rule store (run mine)");
  if (!missing.empty()) {
    std::string msg = std::string("eval mode ") + std::string(to_string(mode)) + " is missing:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw MissingArtifactError(msg);
  }

  switch (mode) {
    case AblationMode::no_adapter:
      return [in](const Query& q) {
        Prediction p;
        p.fused = in.beam_cache->distribution(q.id, in.softmax);
        p.llm_candidates = p.fused.size();
        return p;
      };
    case AblationMode::adapter_only:
      return [in](const Query& q) {
        Prediction p;
        p.fused = in.adapter->score(q);
        p.adapter_candidates = p.fused.size();
        return p;
      };
    case AblationMode::tlogic_static:
      return [in](const Query& q) {
        const auto history = in.dataset->graph.history_before(q.time);
        const auto groundings = rules::ground_rules(history, q, *in.rules, in.grounding);
        Prediction p;
        p.fused = rules::static_score(groundings, *in.rules, in.static_lambda, q.time);
        p.adapter_candidates = p.fused.size();
        return p;
      };
    case AblationMode::full:
    case AblationMode::no_bsl: {
      const auto* cache = mode == AblationMode::full ? in.beam_cache : in.iterative_cache;
      return [in, cache](const Query& q) {
        Prediction p;
        const auto llm = cache->distribution(q.id, in.softmax);
        const auto ada = in.adapter->score(q);
        p.llm_candidates = llm.size();
        p.adapter_candidates = ada.size();
        p.fused = fusion::fuse(llm, ada, in.gate->weight(q.relation), in.fusion);
        return p;
      };
    }
  }
  throw UsageError("unknown eval mode");
}

MetricsReport run_ablation(AblationMode mode, const AblationInputs& inputs, SplitName split,
                           std::vector<RankRecord>* ranks) {
  const auto system = make_system(mode, inputs);
  const auto queries = inputs.dataset->split.queries(split);
  for (const auto* cache : {inputs.beam_cache, inputs.iterative_cache}) {
    const bool used = (cache == inputs.beam_cache && (mode == AblationMode::full || mode == AblationMode::no_adapter)) ||
                      (cache == inputs.iterative_cache && mode == AblationMode::no_bsl);
    if (!used || !cache) continue;
    const auto gaps = cache->missing(queries);
    if (!gaps.empty()) {
      throw MissingArtifactError("cache lacks " + std::to_string(gaps.size()) + " " + std::string(to_string(split)) +
                                 " queries, first query " + std::to_string(gaps.front()) + " (run precompute)");
    }
  }
  auto report = evaluate(inputs.dataset->graph, queries, system, ranks);
  report.mode = std::string(to_string(mode));
  report.split = std::string(to_string(split));
  return report;
}

}  // namespace tkg::eval
