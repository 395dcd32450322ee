#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/core/dataset.hpp"
#include "tkg/eval/eval.hpp"
#include "tkg/lm/generation.hpp"

namespace tkg::app {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

/// Every recognised configuration key with its default and description.
std::span<const ConfigKey> config_keys();

/// Flat key = value experiment configuration. Unknown keys are usage errors;
/// keys not given keep their defaults.
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// Reads `key = value` lines; '#' starts a comment.
  static ExperimentConfig load(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& str(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;

  /// All keys, sorted, one `key = value` per line.
  std::string canonical() const;
  std::filesystem::path output_dir() const { return str("output"); }

 private:
  std::map<std::string, std::string> values_;
};

/// Fingerprints of each pipeline stage. A stage hash covers the keys that
/// stage reads plus the hashes of the stages it consumes.
struct StageHashes {
  std::string data;
  std::string mine;
  std::string precompute_beam;
  std::string precompute_iterative;
  std::string train;

  friend bool operator==(const StageHashes&, const StageHashes&) = default;
};
StageHashes stage_hashes(const ExperimentConfig& config);

/// Canonical experiment layout.
struct ExperimentPaths {
  std::filesystem::path root;
  std::filesystem::path rules() const { return root / "rules" / "rules.jsonl"; }
  std::filesystem::path mining_stats() const { return root / "rules" / "stats.json"; }
  std::filesystem::path cache(lm::Generation g) const {
    return root / "cache" / (g == lm::Generation::beam ? "beam.jsonl" : "iterative.jsonl");
  }
  std::filesystem::path checkpoint() const { return root / "ckpt" / "adapter.ckpt"; }
  std::filesystem::path train_log() const { return root / "ckpt" / "train_log.csv"; }
  std::filesystem::path frozen_config() const { return root / "ckpt" / "config.txt"; }
  std::filesystem::path report(std::string_view mode, std::string_view split, std::string_view ext) const;
};

Dataset load_experiment_dataset(const ExperimentConfig& config);

void cmd_mine(const ExperimentConfig& config, std::ostream& log);
void cmd_precompute(const ExperimentConfig& config, std::ostream& log);
void cmd_train(const ExperimentConfig& config, std::ostream& log);
eval::MetricsReport cmd_eval(const ExperimentConfig& config, eval::AblationMode mode, SplitName split,
                             bool dump_ranks, std::ostream& log);
/// Collects every report in reports/ into one table (also written to reports/summary.txt).
void cmd_report(const ExperimentConfig& config, std::ostream& out);

}  // namespace tkg::app
