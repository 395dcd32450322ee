#include "tkg/core/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "tkg/core/error.hpp"

namespace tkg {

SplitFacts make_recurrence_facts(const SyntheticConfig& config) {
  if (config.entities < 2 || config.relations < 1 || config.timesteps < 3) {
    throw UsageError("synthetic dataset needs >= 2 entities, >= 1 relation and >= 3 snapshots");
  }
  std::mt19937_64 rng(config.seed);
  const auto n = config.entities;
  std::vector<std::vector<EntityId>> object(config.relations, std::vector<EntityId>(n));
  for (auto& sigma : object) {
    std::iota(sigma.begin(), sigma.end(), EntityId{0});
    std::shuffle(sigma.begin(), sigma.end(), rng);
    for (EntityId s = 0; s < n; ++s) {
      if (sigma[s] == s) std::swap(sigma[s], sigma[(s + 1) % n]);
    }
  }

  const auto test_len = std::max<Time>(1, static_cast<Time>(std::lround(config.test_fraction * config.timesteps)));
  const auto valid_len = std::max<Time>(1, static_cast<Time>(std::lround(config.valid_fraction * config.timesteps)));
  const Time valid_begin = config.timesteps - test_len - valid_len;
  const Time test_begin = config.timesteps - test_len;
  if (valid_begin < 1) throw UsageError("synthetic dataset leaves no training snapshots");

  std::bernoulli_distribution fires(config.fire_probability);
  std::bernoulli_distribution switches(config.switch_probability);
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n - 1));
  SplitFacts out;
  for (Time t = 0; t < config.timesteps; ++t) {
    auto& bucket = t < valid_begin ? out.train : (t < test_begin ? out.valid : out.test);
    for (RelationId r = 0; r < config.relations; ++r) {
      auto& sigma = object[r];
      for (EntityId s = 0; s < n; ++s) {
        if (!fires(rng)) continue;
        if (config.switch_probability > 0.0 && switches(rng)) {
          const auto other = pick(rng);
          if (other != s && sigma[other] != s && sigma[s] != other) std::swap(sigma[s], sigma[other]);
        }
        bucket.push_back(Quadruple{s, r, sigma[s], t});
      }
    }
  }
  return out;
}

Dataset make_recurrence_dataset(const SyntheticConfig& config, bool inverse) {
  return build_dataset(config.entities, config.relations, make_recurrence_facts(config), inverse);
}

void write_dataset_dir(const SplitFacts& facts, std::size_t entities, std::size_t relations,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::vector<Quadruple>& split) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    for (const auto& q : split) out << q.subject << '\t' << q.relation << '\t' << q.object << '\t' << q.time << '\n';
  };
  write("train.txt", facts.train);
  write("valid.txt", facts.valid);
  write("test.txt", facts.test);
  std::ofstream stat(dir / "stat.txt");
  stat << entities << '\t' << relations << '\n';
}

}  // namespace tkg
