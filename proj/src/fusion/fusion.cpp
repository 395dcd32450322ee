#include "tkg/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tkg/core/error.hpp"

namespace tkg::fusion {

std::string_view to_string(FusionMode m) { return m == FusionMode::mixture ? "mixture" : "product"; }

FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "mixture") return FusionMode::mixture;
  if (s == "product") return FusionMode::product;
  throw UsageError("unknown fusion mode '" + std::string(s) + "' (expected mixture|product)");
}

namespace {

void check(double w, const FusionConfig& config) {
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("fusion weight outside [0, 1]");
  if (config.mode == FusionMode::product && !(config.epsilon > 0.0)) {
    throw std::invalid_argument("product fusion needs epsilon > 0");
  }
}

}  // namespace

EntityDistribution fuse(const EntityDistribution& llm, const EntityDistribution& adapter, double w,
                        const FusionConfig& config) {
  check(w, config);
  if (llm.is_zero()) return adapter;
  if (adapter.is_zero()) return llm;
  std::vector<EntityDistribution::Entry> out;
  const auto a = llm.entries();
  const auto b = adapter.entries();
  const double eps = config.epsilon;
  auto combine = [&](double pl, double pa) {
    return config.mode == FusionMode::mixture ? (1.0 - w) * pl + w * pa : (pl + eps) * std::pow(pa + eps, w);
  };
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.emplace_back(a[i].first, combine(a[i].second, 0.0));
      ++i;
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.emplace_back(b[j].first, combine(0.0, b[j].second));
      ++j;
    } else {
      out.emplace_back(a[i].first, combine(a[i].second, b[j].second));
      ++i;
      ++j;
    }
  }
  return EntityDistribution::from_weights(std::move(out));
}

TapeFused fuse(nn::Tape& tape, const EntityDistribution& llm, const adapters::TapeScores& adapter, nn::Var w,
               const FusionConfig& config) {
  check(tape.scalar(w), config);
  TapeFused out;
  if (adapter.empty()) {
    std::vector<double> masses;
    for (const auto& [e, p] : llm.entries()) {
      out.support.push_back(e);
      masses.push_back(p);
    }
    if (!masses.empty()) out.probs = tape.constant(masses);
    return out;
  }
  out.differentiable = true;
  if (llm.is_zero()) {
    out.support = adapter.candidates;
    out.probs = adapter.probs;
    return out;
  }
  // Adapter candidates first, then entities only the language model proposed.
  out.support = adapter.candidates;
  std::vector<double> l(adapter.candidates.size(), 0.0);
  for (std::size_t i = 0; i < adapter.candidates.size(); ++i) l[i] = llm.mass(adapter.candidates[i]);
  std::size_t llm_only = 0;
  for (const auto& [e, p] : llm.entries()) {
    if (!std::binary_search(adapter.candidates.begin(), adapter.candidates.end(), e)) {
      out.support.push_back(e);
      l.push_back(p);
      ++llm_only;
    }
  }
  auto a = adapter.probs;
  if (llm_only > 0) {
    const std::vector<double> zeros(llm_only, 0.0);
    const std::array<nn::Var, 2> parts{adapter.probs, tape.constant(zeros)};
    a = tape.concat(parts);
  }
  if (config.mode == FusionMode::mixture) {
    const auto lv = tape.constant(l);
    out.probs = tape.add(lv, tape.mul_scalar(tape.sub(a, lv), w));
  } else {
    for (auto& x : l) x += config.epsilon;
    const auto powered = tape.exp(tape.mul_scalar(tape.log(tape.add_const(a, config.epsilon)), w));
    out.probs = tape.normalize(tape.mul(tape.constant(l), powered));
  }
  return out;
}

double bce_loss(const EntityDistribution& fused, EntityId answer) {
  double loss = -std::log(fused.mass(answer) + kLossClamp);
  for (const auto& [e, p] : fused.entries()) {
    if (e != answer) loss -= std::log(1.0 - p + kLossClamp);
  }
  return loss;
}

nn::Var bce_loss(nn::Tape& tape, const TapeFused& fused, EntityId answer) {
  if (fused.support.empty()) return tape.constant(-std::log(kLossClamp));
  const auto complement = tape.log(tape.add_const(tape.scale(fused.probs, -1.0), 1.0 + kLossClamp));
  auto total = tape.sum(complement);
  const auto it = std::find(fused.support.begin(), fused.support.end(), answer);
  if (it == fused.support.end()) return tape.add_const(tape.scale(total, -1.0), -std::log(kLossClamp));
  const auto k = static_cast<std::size_t>(it - fused.support.begin());
  const auto hit = tape.log(tape.add_const(tape.element(fused.probs, k), kLossClamp));
  total = tape.add(tape.sub(total, tape.element(complement, k)), hit);
  return tape.scale(total, -1.0);
}

}  // namespace tkg::fusion
