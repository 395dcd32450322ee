#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tkg/nn/tensor.hpp"

namespace tkg::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every tensor of a ParameterSet, with bias correction.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config = {});
  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// Parameter checkpoint file:
///   8 bytes   magic "TKGCKPT1"
///   4 bytes   format version, little endian
///   8 bytes   header length N, little endian
///   N bytes   JSON header {"kind", "config_hash", "meta", "tensors": [{"name", "rows", "cols"}]}
///   payload   every tensor's values as little-endian float32, in header order
struct CheckpointHeader {
  std::string kind;
  std::string config_hash;
  std::string meta_json = "{}";
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointHeader& header);
/// Reads the header only.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
/// Loads values into `params`; names and shapes must match exactly.
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

/// Rounds every parameter to float32, the precision checkpoints store.
void round_to_float(ParameterSet& params);

}  // namespace tkg::nn
