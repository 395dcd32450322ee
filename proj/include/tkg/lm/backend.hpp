#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/prompt/prompt.hpp"

namespace tkg::lm {

using TokenId = std::uint32_t;

/// Token vocabulary. Every decimal digit is its own token and "]" is the
/// stop token that closes an entity completion.
class Tokenizer {
 public:
  explicit Tokenizer(std::vector<std::string> vocab);
  /// "0".."9", "]", "<unk>".
  static Tokenizer digits();

  std::size_t size() const { return vocab_.size(); }
  const std::string& text(TokenId id) const { return vocab_.at(id); }
  TokenId stop() const { return stop_; }
  std::optional<TokenId> find(std::string_view text) const;
  std::string decode(std::span<const TokenId> tokens) const;

 private:
  std::vector<std::string> vocab_;
  TokenId stop_ = 0;
};

/// A frozen language model seen through next-token log-probabilities.
///
/// Implementations must be deterministic (same prompt and prefix, same
/// vector) and safe to call concurrently. Log-probabilities may be -inf for
/// impossible tokens but never NaN or +inf, and must log-sum-exp to 0.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::vector<double> next_token_logprobs(const prompt::PromptDoc& prompt,
                                                  std::span<const TokenId> generated) const = 0;
  virtual std::string name() const = 0;
};

/// Adapts a callable; used for programmatic scripted models.
class FunctionModel final : public LanguageModel {
 public:
  using Fn = std::function<std::vector<double>(const prompt::PromptDoc&, std::span<const TokenId>)>;
  FunctionModel(Tokenizer tokenizer, Fn fn, std::string name = "function")
      : tokenizer_(std::move(tokenizer)), fn_(std::move(fn)), name_(std::move(name)) {}

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::vector<double> next_token_logprobs(const prompt::PromptDoc& prompt,
                                          std::span<const TokenId> generated) const override {
    return fn_(prompt, generated);
  }
  std::string name() const override { return name_; }

 private:
  Tokenizer tokenizer_;
  Fn fn_;
  std::string name_;
};

/// Throws DataError unless `logprobs` is a valid distribution over `vocab_size` tokens.
void validate_logprobs(std::span<const double> logprobs, std::size_t vocab_size);

/// Scripted backend described by a JSON file. Two kinds are supported:
///
///   {"kind": "table", "vocab": [...], "default": [lp...], "rows": {"1|0": [lp...]}}
///     Explicit conditionals keyed by the generated prefix (token texts joined by '|').
///
///   {"kind": "history", "policy": "recency" | "reverse_recency" | "frequency",
///    "decay": 0.7, "noise": 0.05, "max_candidates": 20}
///     Parses the prompt, ranks the objects it mentions by `policy`, gives the
///     i-th candidate weight decay^i, and spells the candidates digit by digit
///     with `noise` mass spread uniformly over the vocabulary at every step.
std::unique_ptr<LanguageModel> load_scripted_model(const std::string& path);

/// Resolves a backend spec: "scripted:<path>". Hosted models are not built in.
std::unique_ptr<LanguageModel> make_model(const std::string& spec);

}  // namespace tkg::lm
