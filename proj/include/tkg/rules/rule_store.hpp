#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tkg/core/types.hpp"

namespace tkg::rules {

/// Cyclic temporal rule
///   (e1, head, e_{l+1}, t_{l+1}) <- (e1, body[0], e2, t1) ^ ... ^ (el, body[l-1], e_{l+1}, tl)
/// with t1 <= ... <= tl < t_{l+1}.
struct TemporalRule {
  RelationId head = 0;
  std::vector<RelationId> body;
  double confidence = 0.0;  ///< (support + 1) / (body_support + 2)
  std::size_t support = 0;  ///< body groundings followed by the head
  std::size_t body_support = 0;
};

/// Immutable rule collection indexed by head relation. Rules are ordered by
/// (head, confidence descending, body).
class RuleStore {
 public:
  RuleStore() = default;
  explicit RuleStore(std::vector<TemporalRule> rules);

  std::span<const TemporalRule> rules() const { return rules_; }
  const TemporalRule& operator[](std::size_t i) const { return rules_[i]; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  /// Indices of rules whose head is `head`.
  std::span<const std::uint32_t> with_head(RelationId head) const;

 private:
  std::vector<TemporalRule> rules_;
  std::vector<std::uint32_t> order_;
  std::map<RelationId, std::pair<std::size_t, std::size_t>> head_ranges_;
};

/// Newline-delimited JSON: an optional metadata record {"meta": {...}}
/// followed by one {head, body, confidence, support} record per rule.
void write_rules(const RuleStore& store, std::ostream& out, const std::string& meta_json = {});

struct LoadedRules {
  RuleStore store;
  std::string meta_json;  ///< empty when the stream had no metadata record
};
LoadedRules read_rules(std::istream& in);

}  // namespace tkg::rules
