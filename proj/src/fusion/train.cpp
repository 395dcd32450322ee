#include "tkg/fusion/train.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "tkg/core/error.hpp"
#include "tkg/eval/eval.hpp"

namespace tkg::fusion {

namespace {

struct StepResult {
  double loss = 0.0;
  std::size_t rank = 0;
};

StepResult query_step(nn::Tape& tape, adapters::Adapter& adapter, adapters::Gate& gate, const Dataset& dataset,
                      const Query& q, const lm::DistributionCache& cache, const TrainConfig& train,
                      const FusionConfig& fusion, std::size_t mark, double seed) {
  const auto llm = cache.distribution(q.id, train.softmax);
  const auto ada = adapter.forward(tape, q);
  const auto w = gate.weight(tape, q.relation);
  const auto fused = fuse(tape, llm, ada, w, fusion);
  const auto loss = bce_loss(tape, fused, *q.answer);

  StepResult out;
  out.loss = tape.scalar(loss);
  std::vector<EntityDistribution::Entry> masses;
  if (!fused.support.empty()) {
    const auto p = tape.value(fused.probs);
    for (std::size_t i = 0; i < fused.support.size(); ++i) masses.emplace_back(fused.support[i], p[i]);
  }
  const auto filter = same_time_filter_set(dataset.graph, q);
  out.rank = eval::filtered_rank(EntityDistribution::from_weights(std::move(masses)), *q.answer, filter,
                                 dataset.graph.entity_count());
  if (seed != 0.0 && fused.differentiable) tape.backward(loss, mark, seed);
  tape.truncate(mark);
  return out;
}

void require_coverage(const lm::DistributionCache& cache, const Dataset& dataset) {
  std::vector<QueryId> gaps;
  for (const auto s : {SplitName::train, SplitName::valid}) {
    const auto m = cache.missing(dataset.split.queries(s));
    gaps.insert(gaps.end(), m.begin(), m.end());
  }
  if (gaps.empty()) return;
  std::string msg = "cache is missing " + std::to_string(gaps.size()) + " train/valid queries:";
  for (std::size_t i = 0; i < std::min<std::size_t>(gaps.size(), 20); ++i) msg += " " + std::to_string(gaps[i]);
  if (gaps.size() > 20) msg += " ...";
  throw MissingArtifactError(msg);
}

EpochRecord to_record(std::size_t epoch, std::string split, const std::vector<std::size_t>& ranks, double loss_sum) {
  EpochRecord r;
  r.epoch = epoch;
  r.split = std::move(split);
  if (ranks.empty()) return r;
  const double n = static_cast<double>(ranks.size());
  for (const auto k : ranks) {
    r.hits1 += k <= 1;
    r.hits3 += k <= 3;
    r.hits10 += k <= 10;
  }
  r.hits1 /= n;
  r.hits3 /= n;
  r.hits10 /= n;
  r.loss = loss_sum / n;
  return r;
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const nn::ParameterSet& params) {
  Snapshot s;
  for (const auto& t : params.tensors()) s.push_back(t.value);
  return s;
}

void restore(nn::ParameterSet& params, const Snapshot& s) {
  std::size_t k = 0;
  for (auto& t : params.tensors()) t.value = s[k++];
}

}  // namespace

EpochRecord evaluate_loss(adapters::Adapter& adapter, adapters::Gate& gate, const Dataset& dataset,
                          std::span<const Query> queries, const lm::DistributionCache& cache,
                          const TrainConfig& train, const FusionConfig& fusion) {
  nn::Tape tape;
  std::vector<std::size_t> ranks;
  double loss_sum = 0.0;
  const std::size_t batch = std::max<std::size_t>(train.batch_size, 1);
  for (std::size_t begin = 0; begin < queries.size(); begin += batch) {
    const auto chunk = queries.subspan(begin, std::min(batch, queries.size() - begin));
    tape.clear();
    adapter.begin_batch(tape, chunk);
    const auto mark = tape.mark();
    for (const auto& q : chunk) {
      const auto r = query_step(tape, adapter, gate, dataset, q, cache, train, fusion, mark, 0.0);
      loss_sum += r.loss;
      ranks.push_back(r.rank);
    }
  }
  adapter.params().zero_grad();
  return to_record(0, "", ranks, loss_sum);
}

TrainResult train_adapter(adapters::Adapter& adapter, adapters::Gate& gate, const Dataset& dataset,
                          const lm::DistributionCache& cache, const TrainConfig& train, const FusionConfig& fusion,
                          const CheckpointTarget& checkpoint) {
  if (train.batch_size == 0) throw UsageError("batch size must be >= 1");
  require_coverage(cache, dataset);
  const auto train_queries = dataset.split.queries(SplitName::train);
  const auto valid_queries = dataset.split.queries(SplitName::valid);

  auto& params = adapter.params();
  params.zero_grad();
  nn::Adam adam(params, nn::AdamConfig{.lr = train.learning_rate});
  std::mt19937_64 rng(train.seed);

  TrainResult result;
  auto log_epoch = [&](std::size_t epoch, EpochRecord train_row) {
    train_row.epoch = epoch;
    train_row.split = "train";
    result.log.push_back(train_row);
    auto valid_row = evaluate_loss(adapter, gate, dataset, valid_queries, cache, train, fusion);
    valid_row.epoch = epoch;
    valid_row.split = "valid";
    result.log.push_back(valid_row);
    return valid_row;
  };

  Snapshot best;
  EpochRecord best_row;
  auto consider = [&](std::size_t epoch, const EpochRecord& row) {
    const bool better = best.empty() || row.hits3 > best_row.hits3 ||
                        (row.hits3 == best_row.hits3 &&
                         (row.hits1 > best_row.hits1 || (row.hits1 == best_row.hits1 && row.loss < best_row.loss)));
    if (!better) return;
    best_row = row;
    result.best_epoch = epoch;
    result.best_valid_hits3 = row.hits3;
    best = snapshot(params);
  };

  consider(0, log_epoch(0, evaluate_loss(adapter, gate, dataset, train_queries, cache, train, fusion)));

  std::vector<std::size_t> order(train_queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Tape tape;
  std::vector<Query> batch;
  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> ranks;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += train.batch_size) {
      const auto end = std::min(order.size(), begin + train.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_queries[order[i]]);
      tape.clear();
      adapter.begin_batch(tape, batch);
      const auto mark = tape.mark();
      const double seed = 1.0 / static_cast<double>(batch.size());
      for (const auto& q : batch) {
        const auto r = query_step(tape, adapter, gate, dataset, q, cache, train, fusion, mark, seed);
        loss_sum += r.loss;
        ranks.push_back(r.rank);
      }
      tape.backward_prefix(mark);
      adam.step();
    }
    consider(epoch, log_epoch(epoch, to_record(epoch, "train", ranks, loss_sum)));
  }

  restore(params, best);
  nn::round_to_float(params);
  params.zero_grad();
  if (!checkpoint.path.empty()) nn::save_checkpoint(checkpoint.path, params, checkpoint.header);
  return result;
}

void write_train_log(const std::vector<EpochRecord>& log, std::ostream& out) {
  out << "epoch,split,hits1,hits3,hits10,loss\n";
  char line[160];
  for (const auto& r : log) {
    std::snprintf(line, sizeof line, "%zu,%s,%.6f,%.6f,%.6f,%.9g\n", r.epoch, r.split.c_str(), r.hits1, r.hits3,
                  r.hits10, r.loss);
    out << line;
  }
}

}  // namespace tkg::fusion
