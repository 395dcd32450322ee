#include "tkg/lm/backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "tkg/core/error.hpp"
#include "tkg/core/hash.hpp"

namespace tkg::lm {

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  const auto it = std::find(vocab_.begin(), vocab_.end(), "]");
  if (it == vocab_.end()) throw DataError("tokenizer vocabulary has no stop token ']'");
  stop_ = static_cast<TokenId>(it - vocab_.begin());
}

Tokenizer Tokenizer::digits() {
  std::vector<std::string> vocab;
  for (char c = '0'; c <= '9'; ++c) vocab.emplace_back(1, c);
  vocab.emplace_back("]");
  vocab.emplace_back("<unk>");
  return Tokenizer(std::move(vocab));
}

std::optional<TokenId> Tokenizer::find(std::string_view text) const {
  const auto it = std::find(vocab_.begin(), vocab_.end(), text);
  if (it == vocab_.end()) return std::nullopt;
  return static_cast<TokenId>(it - vocab_.begin());
}

std::string Tokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (const auto t : tokens) out += vocab_.at(t);
  return out;
}

void validate_logprobs(std::span<const double> logprobs, std::size_t vocab_size) {
  if (logprobs.size() != vocab_size) {
    throw DataError("backend returned " + std::to_string(logprobs.size()) + " log-probabilities for a vocabulary of " +
                    std::to_string(vocab_size));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (const double lp : logprobs) {
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) {
      throw DataError("backend returned a non-finite log-probability");
    }
    top = std::max(top, lp);
  }
  if (!std::isfinite(top)) throw DataError("backend returned an all -inf distribution");
  double sum = 0.0;
  for (const double lp : logprobs) sum += std::exp(lp - top);
  if (std::abs(top + std::log(sum)) > 1e-6) throw DataError("backend log-probabilities do not normalize");
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

class TableModel final : public LanguageModel {
 public:
  TableModel(Tokenizer tokenizer, std::vector<double> fallback,
             std::unordered_map<std::string, std::vector<double>> rows, std::string name)
      : tokenizer_(std::move(tokenizer)), fallback_(std::move(fallback)), rows_(std::move(rows)),
        name_(std::move(name)) {}

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::string name() const override { return name_; }

  std::vector<double> next_token_logprobs(const prompt::PromptDoc&,
                                          std::span<const TokenId> generated) const override {
    std::string key;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      if (i) key += '|';
      key += tokenizer_.text(generated[i]);
    }
    const auto it = rows_.find(key);
    return it == rows_.end() ? fallback_ : it->second;
  }

 private:
  Tokenizer tokenizer_;
  std::vector<double> fallback_;
  std::unordered_map<std::string, std::vector<double>> rows_;
  std::string name_;
};

enum class Policy { recency, reverse_recency, frequency };

class HistoryModel final : public LanguageModel {
 public:
  HistoryModel(Policy policy, double decay, double noise, std::size_t max_candidates, std::string name)
      : tokenizer_(Tokenizer::digits()), policy_(policy), decay_(decay), noise_(noise),
        max_candidates_(max_candidates), name_(std::move(name)) {}

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::string name() const override { return name_; }

  std::vector<double> next_token_logprobs(const prompt::PromptDoc& prompt,
                                          std::span<const TokenId> generated) const override {
    const auto vocab = tokenizer_.size();
    const auto candidates = rank_candidates(prompt);
    const auto prefix = tokenizer_.decode(generated);

    std::vector<double> mass(vocab, 0.0);
    double matched = 0.0;
    double weight = 1.0;
    for (const auto& c : candidates) {
      const auto spelled = std::to_string(c) + "]";
      if (spelled.size() > prefix.size() && spelled.compare(0, prefix.size(), prefix) == 0) {
        if (const auto tok = tokenizer_.find(std::string_view(spelled).substr(prefix.size(), 1))) {
          mass[*tok] += weight;
          matched += weight;
        }
      }
      weight *= decay_;
    }

    std::vector<double> out(vocab);
    const double floor = noise_ / static_cast<double>(vocab);
    if (matched > 0.0) {
      for (std::size_t t = 0; t < vocab; ++t) out[t] = safe_log((1.0 - noise_) * mass[t] / matched + floor);
    } else if (candidates.empty() && generated.empty()) {
      // Nothing to copy from: close immediately, which maps to no entity.
      for (std::size_t t = 0; t < vocab; ++t) {
        out[t] = safe_log((t == tokenizer_.stop() ? 1.0 - noise_ : 0.0) + floor);
      }
    } else {
      std::fill(out.begin(), out.end(), -std::log(static_cast<double>(vocab)));
    }
    return out;
  }

 private:
  std::vector<EntityId> rank_candidates(const prompt::PromptDoc& doc) const {
    const auto parsed = prompt::parse_prompt(doc.text);
    std::vector<EntityId> ranked;
    if (!parsed) return ranked;
    std::vector<EntityId> mentions;  // oldest first
    for (const auto& f : parsed->facts) {
      mentions.push_back(f.subject == parsed->query_subject ? f.object : f.subject);
    }
    auto push_unique = [&](EntityId e) {
      if (std::find(ranked.begin(), ranked.end(), e) == ranked.end()) ranked.push_back(e);
    };
    switch (policy_) {
      case Policy::recency:
        for (auto it = mentions.rbegin(); it != mentions.rend(); ++it) push_unique(*it);
        break;
      case Policy::reverse_recency:
        for (const auto e : mentions) push_unique(e);
        break;
      case Policy::frequency: {
        for (auto it = mentions.rbegin(); it != mentions.rend(); ++it) push_unique(*it);
        std::map<EntityId, std::size_t> counts;
        for (const auto e : mentions) ++counts[e];
        std::stable_sort(ranked.begin(), ranked.end(),
                         [&](EntityId a, EntityId b) { return counts[a] > counts[b]; });
        break;
      }
    }
    if (ranked.size() > max_candidates_) ranked.resize(max_candidates_);
    return ranked;
  }

  Tokenizer tokenizer_;
  Policy policy_;
  double decay_;
  double noise_;
  std::size_t max_candidates_;
  std::string name_;
};

}  // namespace

std::unique_ptr<LanguageModel> load_scripted_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scripted backend " + path);
  nlohmann::json spec;
  try {
    in >> spec;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("scripted backend " + path + ": " + e.what());
  }
  const auto name = "scripted:" + std::filesystem::path(path).filename().string() + "#" + file_hash(path);
  const auto kind = spec.value("kind", std::string{});
  try {
    if (kind == "table") {
      Tokenizer tokenizer(spec.at("vocab").get<std::vector<std::string>>());
      auto fallback = spec.at("default").get<std::vector<double>>();
      validate_logprobs(fallback, tokenizer.size());
      std::unordered_map<std::string, std::vector<double>> rows;
      if (spec.contains("rows")) {
        for (const auto& [key, value] : spec["rows"].items()) {
          auto row = value.get<std::vector<double>>();
          validate_logprobs(row, tokenizer.size());
          rows.emplace(key, std::move(row));
        }
      }
      return std::make_unique<TableModel>(std::move(tokenizer), std::move(fallback), std::move(rows), name);
    }
    if (kind == "history") {
      const auto policy_name = spec.value("policy", std::string("recency"));
      Policy policy;
      if (policy_name == "recency") {
        policy = Policy::recency;
      } else if (policy_name == "reverse_recency") {
        policy = Policy::reverse_recency;
      } else if (policy_name == "frequency") {
        policy = Policy::frequency;
      } else {
        throw DataError("unknown history policy '" + policy_name + "'");
      }
      const double decay = spec.value("decay", 0.7);
      const double noise = spec.value("noise", 0.05);
      if (!(decay > 0.0 && decay <= 1.0) || !(noise >= 0.0 && noise < 1.0)) {
        throw DataError("history backend needs 0 < decay <= 1 and 0 <= noise < 1");
      }
      return std::make_unique<HistoryModel>(policy, decay, noise, spec.value("max_candidates", std::size_t{20}),
                                            name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("scripted backend " + path + ": " + e.what());
  }
  throw DataError("scripted backend " + path + ": unknown kind '" + kind + "'");
}

std::unique_ptr<LanguageModel> make_model(const std::string& spec) {
  constexpr std::string_view scripted = "scripted:";
  if (spec.starts_with(scripted)) return load_scripted_model(spec.substr(scripted.size()));
  throw UsageError("model '" + spec +
                   "' is not available: only scripted:<path> backends are built in; plug a hosted model in "
                   "through the LanguageModel interface");
}

}  // namespace tkg::lm
