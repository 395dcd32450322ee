#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tkg/adapters/adapter.hpp"
#include "tkg/core/dataset.hpp"
#include "tkg/fusion/fusion.hpp"
#include "tkg/lm/cache.hpp"
#include "tkg/nn/optim.hpp"

namespace tkg::fusion {

struct TrainConfig {
  std::size_t epochs = 5;
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  lm::SoftmaxMode softmax = lm::SoftmaxMode::logprob;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_valid_hits3 = 0.0;
};

/// Where and how to write the best checkpoint; empty path keeps it in memory only.
struct CheckpointTarget {
  std::filesystem::path path;
  nn::CheckpointHeader header;
};

/// Mean loss and filtered Hits@{1,3,10} of the fused prediction over `queries`
/// with the current parameters; no parameter is touched.
EpochRecord evaluate_loss(adapters::Adapter& adapter, adapters::Gate& gate, const Dataset& dataset,
                          std::span<const Query> queries, const lm::DistributionCache& cache,
                          const TrainConfig& train, const FusionConfig& fusion);

/// Mini-batch Adam on the fused BCE loss; the language model is only read
/// through `cache`. Logs epoch 0 (untrained) and every later epoch on train
/// and valid, keeps the parameters with the best validation Hits@3 (ties go
/// to Hits@1, then to the lower loss) and leaves the adapter holding them,
/// rounded to checkpoint precision. Throws MissingArtifactError if the cache
/// lacks any train or valid query.
TrainResult train_adapter(adapters::Adapter& adapter, adapters::Gate& gate, const Dataset& dataset,
                          const lm::DistributionCache& cache, const TrainConfig& train, const FusionConfig& fusion,
                          const CheckpointTarget& checkpoint = {});

void write_train_log(const std::vector<EpochRecord>& log, std::ostream& out);

}  // namespace tkg::fusion
