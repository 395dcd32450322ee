#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "tkg/adapters/adapter.hpp"
#include "tkg/core/distribution.hpp"
#include "tkg/nn/tape.hpp"

namespace tkg::fusion {

enum class FusionMode : std::uint8_t {
  mixture,  ///< (1 - w) p_llm + w p_adapter
  product,  ///< proportional to (p_llm + eps) (p_adapter + eps)^w
};
std::string_view to_string(FusionMode m);
FusionMode parse_fusion_mode(std::string_view s);

struct FusionConfig {
  FusionMode mode = FusionMode::mixture;
  double epsilon = 1e-6;  ///< product-mode smoothing
};

/// Combines the language-model and adapter distributions over their union
/// support with weight w in [0, 1]. A zero input yields the other input
/// unchanged; two zero inputs yield the zero distribution.
EntityDistribution fuse(const EntityDistribution& llm, const EntityDistribution& adapter, double w,
                        const FusionConfig& config = {});

/// Fused probabilities on a tape: `probs[i]` belongs to `support[i]`.
/// `support` is empty only when both inputs are zero.
struct TapeFused {
  std::vector<EntityId> support;
  nn::Var probs;
  bool differentiable = false;  ///< false when the adapter contributed nothing
};

TapeFused fuse(nn::Tape& tape, const EntityDistribution& llm, const adapters::TapeScores& adapter, nn::Var w,
               const FusionConfig& config = {});

constexpr double kLossClamp = 1e-8;

/// -[log(p_ans + c) + sum_{j != ans, j in support} log(1 - p_j + c)], c = 1e-8.
/// Entities outside the support have p = 0 and are left out.
double bce_loss(const EntityDistribution& fused, EntityId answer);
nn::Var bce_loss(nn::Tape& tape, const TapeFused& fused, EntityId answer);

}  // namespace tkg::fusion
