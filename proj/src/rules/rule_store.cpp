#include "tkg/rules/rule_store.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "tkg/core/error.hpp"

namespace tkg::rules {

RuleStore::RuleStore(std::vector<TemporalRule> rules) : rules_(std::move(rules)) {
  std::sort(rules_.begin(), rules_.end(), [](const TemporalRule& a, const TemporalRule& b) {
    if (a.head != b.head) return a.head < b.head;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.body < b.body;
  });
  order_.resize(rules_.size());
  std::iota(order_.begin(), order_.end(), 0U);
  for (std::size_t i = 0; i < rules_.size();) {
    std::size_t j = i;
    while (j < rules_.size() && rules_[j].head == rules_[i].head) ++j;
    head_ranges_[rules_[i].head] = {i, j};
    i = j;
  }
}

std::span<const std::uint32_t> RuleStore::with_head(RelationId head) const {
  const auto it = head_ranges_.find(head);
  if (it == head_ranges_.end()) return {};
  return std::span(order_).subspan(it->second.first, it->second.second - it->second.first);
}

void write_rules(const RuleStore& store, std::ostream& out, const std::string& meta_json) {
  if (!meta_json.empty()) {
    nlohmann::ordered_json meta;
    meta["meta"] = nlohmann::ordered_json::parse(meta_json);
    out << meta.dump() << '\n';
  }
  for (const auto& rule : store.rules()) {
    nlohmann::ordered_json rec;
    rec["head"] = rule.head;
    rec["body"] = rule.body;
    rec["confidence"] = rule.confidence;
    rec["support"] = rule.support;
    out << rec.dump() << '\n';
  }
}

LoadedRules read_rules(std::istream& in) {
  LoadedRules loaded;
  std::vector<TemporalRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      if (rec.contains("meta")) {
        loaded.meta_json = rec["meta"].dump();
        continue;
      }
      TemporalRule rule;
      rule.head = rec.at("head").get<RelationId>();
      rule.body = rec.at("body").get<std::vector<RelationId>>();
      rule.confidence = rec.at("confidence").get<double>();
      rule.support = rec.at("support").get<std::size_t>();
      if (rule.body.empty()) throw DataError("empty rule body");
      rules.push_back(std::move(rule));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("rule store line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("rule store line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  loaded.store = RuleStore(std::move(rules));
  return loaded;
}

}  // namespace tkg::rules
