#pragma once

#include <cstdint>
#include <filesystem>

#include "tkg/core/dataset.hpp"

namespace tkg {

/// Recurrence TKG: every relation maps subjects to objects through a
/// fixed-point-free permutation, each (subject, relation) pair fires
/// independently per snapshot, and a fact repeats the pair's current object.
/// With `switch_probability` a firing pair first swaps its object with
/// another subject of the same relation, so the answer to (s, r, ?, t) is
/// the most recent object of (s, r) unless the pair just switched.
struct SyntheticConfig {
  std::size_t entities = 200;
  std::size_t relations = 2;
  Time timesteps = 50;
  double fire_probability = 0.25;
  double switch_probability = 0.0;
  double valid_fraction = 0.1;  ///< of the snapshots, taken after train
  double test_fraction = 0.1;   ///< of the snapshots, taken last
  std::uint64_t seed = 7;
};

SplitFacts make_recurrence_facts(const SyntheticConfig& config);
Dataset make_recurrence_dataset(const SyntheticConfig& config, bool inverse = true);

/// Writes train.txt / valid.txt / test.txt (s r o t, tab separated) and stat.txt.
void write_dataset_dir(const SplitFacts& facts, std::size_t entities, std::size_t relations,
                       const std::filesystem::path& dir);

}  // namespace tkg
