#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "tkg/core/distribution.hpp"
#include "tkg/lm/backend.hpp"

namespace tkg::lm {

struct GeneratedSequence {
  std::vector<TokenId> tokens;
  double logprob = 0.0;  ///< sum of per-token log-probabilities
};

/// Finalized sequences, log-probability descending.
struct BeamResult {
  std::vector<GeneratedSequence> sequences;
};

/// Beam search over token steps. A hypothesis is finalized when it emits the
/// stop token or reaches `max_len` tokens; finalized hypotheses are not
/// expanded. `width` live hypotheses are kept per step (0 means `k`).
/// Returns the best `k` finalized sequences (fewer if fewer exist).
BeamResult beam_generate(const LanguageModel& model, const prompt::PromptDoc& prompt, std::size_t k,
                         std::size_t max_len, std::size_t width = 0);

/// Ablation stand-in for one-pass top-K decoding: `k` greedy draws, each
/// barred from completing a string produced by an earlier draw. Stops at the
/// first draw that cannot complete.
BeamResult iterative_generate(const LanguageModel& model, const prompt::PromptDoc& prompt, std::size_t k,
                              std::size_t max_len);

enum class Generation : std::uint8_t { beam, iterative };
std::string_view to_string(Generation g);
Generation parse_generation(std::string_view s);

/// Longest valid entity index plus the stop token.
std::size_t default_max_len(std::size_t entity_count);

using ScoredEntity = std::pair<EntityId, double>;  ///< (entity, log-probability)

/// Strips the trailing stop token and whitespace; keeps canonical decimal
/// indices in [0, entity_count) and discards everything else. Beams decoding
/// to the same entity merge by log-sum-exp. Order follows first appearance.
std::vector<ScoredEntity> map_sequences_to_entities(const BeamResult& result, const Tokenizer& tokenizer,
                                                    std::size_t entity_count);

enum class SoftmaxMode : std::uint8_t {
  logprob,      ///< softmax over log-probabilities (renormalized sequence probabilities)
  probability,  ///< literal softmax over the raw probabilities
};
std::string_view to_string(SoftmaxMode m);
SoftmaxMode parse_softmax_mode(std::string_view s);

/// Empty input gives the zero distribution.
EntityDistribution build_entity_distribution(std::span<const ScoredEntity> scored,
                                             SoftmaxMode mode = SoftmaxMode::logprob);

}  // namespace tkg::lm
