#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/adapters/adapter.hpp"
#include "tkg/core/dataset.hpp"
#include "tkg/core/distribution.hpp"
#include "tkg/fusion/fusion.hpp"
#include "tkg/lm/cache.hpp"
#include "tkg/rules/grounding.hpp"

namespace tkg::eval {

/// Time-aware filtered rank with the mid-tie convention over the full entity
/// vocabulary: entities in `filter` are removed, unscored entities share score
/// 0, and rank = 1 + #(score > score(answer)) + floor(#(other entities with
/// equal score) / 2).
std::size_t filtered_rank(const EntityDistribution& scores, EntityId answer, std::span<const EntityId> filter,
                          std::size_t entity_count);

struct Prediction {
  EntityDistribution fused;
  std::size_t llm_candidates = 0;
  std::size_t adapter_candidates = 0;
};
using System = std::function<Prediction(const Query&)>;

struct RankRecord {
  QueryId qid = 0;
  std::size_t rank = 0;
  std::size_t llm_candidates = 0;
  std::size_t adapter_candidates = 0;
  std::size_t union_candidates = 0;
  Direction direction = Direction::forward;
};

struct HitsSummary {
  std::size_t queries = 0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct MetricsReport {
  std::string mode;
  std::string split;
  std::string config_hash;
  HitsSummary overall;
  HitsSummary forward;
  HitsSummary inverse;

  std::string to_json() const;
  std::string to_text() const;
};

HitsSummary summarize(std::span<const RankRecord> ranks);
/// Single-step evaluation: every query sees the ground-truth history before its time.
MetricsReport evaluate(const TemporalKG& graph, std::span<const Query> queries, const System& system,
                       std::vector<RankRecord>* ranks = nullptr);

void write_ranks(std::span<const RankRecord> ranks, std::ostream& out);

enum class AblationMode : std::uint8_t { full, no_bsl, no_adapter, adapter_only, tlogic_static };
std::string_view to_string(AblationMode m);
AblationMode parse_ablation_mode(std::string_view s);

/// Everything the ablation modes may draw on. Which members must be set
/// depends on the mode; missing ones are reported together.
struct AblationInputs {
  const Dataset* dataset = nullptr;
  const lm::DistributionCache* beam_cache = nullptr;
  const lm::DistributionCache* iterative_cache = nullptr;
  adapters::Adapter* adapter = nullptr;
  adapters::Gate* gate = nullptr;
  fusion::FusionConfig fusion;
  lm::SoftmaxMode softmax = lm::SoftmaxMode::logprob;
  const rules::RuleStore* rules = nullptr;
  double static_lambda = 0.1;
  rules::GroundingConfig grounding;
};

/// full: cached beam distribution fused with the adapter; no_bsl: the same
/// with the iterative-generation cache; no_adapter: the cached beam
/// distribution alone; adapter_only: the adapter alone; tlogic_static: static
/// rule scoring from the mined rules.
System make_system(AblationMode mode, const AblationInputs& inputs);
MetricsReport run_ablation(AblationMode mode, const AblationInputs& inputs, SplitName split,
                           std::vector<RankRecord>* ranks = nullptr);

}  // namespace tkg::eval
