#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "tkg/core/temporal_kg.hpp"
#include "tkg/core/types.hpp"

namespace tkg {

enum class SplitName : std::uint8_t { train, valid, test };

std::string_view to_string(SplitName s);
SplitName parse_split_name(std::string_view s);

struct SplitStats {
  std::size_t records = 0;     ///< lines read from the file
  std::size_t unique = 0;      ///< after within-file deduplication
  std::size_t duplicates = 0;  ///< records - unique
  Time first_time = 0;
  Time last_time = 0;
};

/// Queries per split plus the snapshot ranges each split covers.
/// Query ids are global and dense: train first, then valid, then test.
struct DatasetSplit {
  std::vector<Query> train;
  std::vector<Query> valid;
  std::vector<Query> test;
  SplitStats train_stats;
  SplitStats valid_stats;
  SplitStats test_stats;

  std::span<const Query> queries(SplitName s) const;
  const SplitStats& stats(SplitName s) const;
  std::size_t query_count() const { return train.size() + valid.size() + test.size(); }
  /// First snapshot index of the validation split: the training history ends here.
  Time train_end() const { return valid_stats.first_time; }
};

struct Dataset {
  TemporalKG graph;  ///< all splits; augmented unless disabled
  DatasetSplit split;
};

struct LoadOptions {
  std::int64_t interval = 1;  ///< raw timestamp units per snapshot (24 for daily ICEWS)
  bool inverse = true;
};

/// Raw facts of the three splits, base relations only, times already normalized.
struct SplitFacts {
  std::vector<Quadruple> train;
  std::vector<Quadruple> valid;
  std::vector<Quadruple> test;
};

/// Reads train.txt / valid.txt / test.txt (tab-separated s r o t_raw, extra
/// columns ignored) and optional stat.txt (|E| |R|) from `dir`.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options);

/// Builds graph and queries from normalized facts. Deduplicates within each
/// split and validates that split time ranges are sequential.
Dataset build_dataset(std::size_t entity_count, std::size_t relation_count, SplitFacts facts,
                      bool inverse);

}  // namespace tkg
