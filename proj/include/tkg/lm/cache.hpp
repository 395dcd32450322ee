#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tkg/core/distribution.hpp"
#include "tkg/core/temporal_kg.hpp"
#include "tkg/lm/generation.hpp"
#include "tkg/prompt/prompt.hpp"
#include "tkg/retrieval/retrieval.hpp"

namespace tkg::lm {

struct CacheMeta {
  std::string model;
  std::string config_hash;
  std::size_t k = 0;
  std::size_t max_len = 0;
  std::string generation = "beam";

  friend bool operator==(const CacheMeta&, const CacheMeta&) = default;
};

/// Precomputed per-query (entity, log-probability) lists.
///
/// On disk: newline-delimited JSON, one metadata record
///   {"meta": {"model": ..., "config_hash": ..., "k": ..., "max_len": ..., "generation": ...}}
/// then one record per query
///   {"qid": 17, "entries": [[entity_id, "logprob"], ...]}
/// with log-probabilities as shortest round-trip decimal strings. An empty
/// entry list is an explicit zero distribution.
class DistributionCache {
 public:
  DistributionCache() = default;
  explicit DistributionCache(CacheMeta meta) : meta_(std::move(meta)) {}

  /// Strict load: any malformed record, including a truncated last line, is a
  /// DataError naming the query id (or line when the id is unreadable).
  static DistributionCache load(const std::filesystem::path& path);

  const CacheMeta& meta() const { return meta_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(QueryId qid) const { return entries_.contains(qid); }
  const std::vector<ScoredEntity>& entries(QueryId qid) const;
  /// Throws MissingArtifactError naming the query id on a miss.
  EntityDistribution distribution(QueryId qid, SoftmaxMode mode = SoftmaxMode::logprob) const;
  /// Query ids from `queries` that have no record.
  std::vector<QueryId> missing(std::span<const Query> queries) const;

  void insert(QueryId qid, std::vector<ScoredEntity> entries);

 private:
  CacheMeta meta_;
  std::map<QueryId, std::vector<ScoredEntity>> entries_;
};

std::string format_record(QueryId qid, std::span<const ScoredEntity> entries);
std::string format_meta(const CacheMeta& meta);

/// Single-writer append-only cache file. Opening an existing file checks the
/// metadata (refusing a mismatch), drops a torn trailing record and resumes.
class CacheWriter {
 public:
  CacheWriter(const std::filesystem::path& path, const CacheMeta& meta);

  const DistributionCache& existing() const { return existing_; }
  bool contains(QueryId qid) const { return existing_.contains(qid); }
  /// Appends and flushes one complete record.
  void append(QueryId qid, std::span<const ScoredEntity> entries);

 private:
  std::ofstream out_;
  DistributionCache existing_;
};

struct PrecomputeRequest {
  const LanguageModel* model = nullptr;
  const TemporalKG* graph = nullptr;
  const rules::RuleStore* rules = nullptr;  ///< required for rule_based retrieval
  const prompt::RelationLexicon* lexicon = nullptr;
  retrieval::RetrievalConfig retrieval;
  prompt::PromptOptions prompt;
  Generation generation = Generation::beam;
  std::size_t k = 20;
  std::size_t max_len = 0;  ///< 0: default_max_len(entity_count)
};

struct PrecomputeStats {
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t zero = 0;  ///< queries whose outputs mapped to no entity
};

/// retrieve -> render -> generate -> map, for every query, appended to the
/// writer. Queries already present are skipped.
PrecomputeStats precompute_cache(const PrecomputeRequest& request, std::span<const Query> queries,
                                 CacheWriter& writer);

/// The generation path for a single query, shared by precompute and tests.
std::vector<ScoredEntity> generate_for_query(const PrecomputeRequest& request, const Query& query);

}  // namespace tkg::lm
