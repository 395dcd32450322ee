#include "tkg/core/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tkg {

namespace {

std::vector<EntityDistribution::Entry> merge_sorted(std::vector<EntityDistribution::Entry> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<EntityDistribution::Entry> out;
  out.reserve(v.size());
  for (const auto& [e, x] : v) {
    if (!out.empty() && out.back().first == e) {
      out.back().second += x;
    } else {
      out.emplace_back(e, x);
    }
  }
  return out;
}

}  // namespace

EntityDistribution EntityDistribution::from_weights(std::vector<Entry> weights) {
  auto merged = merge_sorted(std::move(weights));
  std::erase_if(merged, [](const Entry& x) { return !(x.second > 0.0); });
  double total = 0.0;
  for (const auto& [e, w] : merged) total += w;
  if (merged.empty() || !(total > 0.0) || !std::isfinite(total)) return zero();
  for (auto& [e, w] : merged) w /= total;
  return EntityDistribution(std::move(merged));
}

EntityDistribution EntityDistribution::from_scores(std::vector<Entry> scores) {
  if (scores.empty()) return zero();
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [e, s] : scores) top = std::max(top, s);
  double total = 0.0;
  for (auto& [e, s] : scores) {
    s = std::exp(s - top);
    total += s;
  }
  for (auto& [e, s] : scores) s /= total;
  std::erase_if(scores, [](const Entry& x) { return !(x.second > 0.0); });
  return EntityDistribution(merge_sorted(std::move(scores)));
}

EntityDistribution EntityDistribution::from_normalized(std::vector<Entry> masses) {
  auto merged = merge_sorted(std::move(masses));
  std::erase_if(merged, [](const Entry& x) { return !(x.second > 0.0); });
  return EntityDistribution(std::move(merged));
}

double EntityDistribution::mass(EntityId e) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), e,
                                   [](const Entry& x, EntityId id) { return x.first < id; });
  return it != entries_.end() && it->first == e ? it->second : 0.0;
}

double EntityDistribution::total() const {
  double t = 0.0;
  for (const auto& [e, m] : entries_) t += m;
  return t;
}

std::vector<EntityId> EntityDistribution::support() const {
  std::vector<EntityId> out;
  out.reserve(entries_.size());
  for (const auto& [e, m] : entries_) out.push_back(e);
  return out;
}

std::optional<EntityId> EntityDistribution::argmax() const {
  if (entries_.empty()) return std::nullopt;
  const Entry* best = &entries_.front();
  for (const auto& x : entries_) {
    if (x.second > best->second) best = &x;
  }
  return best->first;
}

}  // namespace tkg
