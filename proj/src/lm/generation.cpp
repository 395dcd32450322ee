#include "tkg/lm/generation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "tkg/core/error.hpp"

namespace tkg::lm {

namespace {

bool better(const GeneratedSequence& a, const GeneratedSequence& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tokens < b.tokens;
}

std::vector<double> query_model(const LanguageModel& model, const prompt::PromptDoc& prompt,
                                std::span<const TokenId> generated) {
  auto lps = model.next_token_logprobs(prompt, generated);
  validate_logprobs(lps, model.tokenizer().size());
  return lps;
}

}  // namespace

BeamResult beam_generate(const LanguageModel& model, const prompt::PromptDoc& prompt, std::size_t k,
                         std::size_t max_len, std::size_t width) {
  if (k < 1 || max_len < 1) throw UsageError("beam search needs k >= 1 and max_len >= 1");
  if (width == 0) width = k;
  const auto stop = model.tokenizer().stop();

  std::vector<GeneratedSequence> live{GeneratedSequence{}};
  std::vector<GeneratedSequence> finished;
  std::vector<GeneratedSequence> candidates;
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    candidates.clear();
    for (const auto& beam : live) {
      const auto lps = query_model(model, prompt, beam.tokens);
      for (TokenId t = 0; t < lps.size(); ++t) {
        if (lps[t] == -std::numeric_limits<double>::infinity()) continue;
        GeneratedSequence next{beam.tokens, beam.logprob + lps[t]};
        next.tokens.push_back(t);
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    live.clear();
    for (auto& c : candidates) {
      if (c.tokens.back() == stop || c.tokens.size() == max_len) {
        finished.push_back(std::move(c));
      } else if (live.size() < width) {
        live.push_back(std::move(c));
      }
    }
    // Scores only decrease with length, so once the k-th finished sequence
    // beats every live hypothesis nothing can overtake it.
    if (finished.size() >= k) {
      std::nth_element(finished.begin(), finished.begin() + static_cast<std::ptrdiff_t>(k - 1), finished.end(),
                       better);
      const double kth = finished[k - 1].logprob;
      std::erase_if(live, [&](const GeneratedSequence& s) { return s.logprob < kth; });
    }
  }
  std::sort(finished.begin(), finished.end(), better);
  if (finished.size() > k) finished.resize(k);
  return BeamResult{std::move(finished)};
}

BeamResult iterative_generate(const LanguageModel& model, const prompt::PromptDoc& prompt, std::size_t k,
                              std::size_t max_len) {
  if (k < 1 || max_len < 1) throw UsageError("iterative generation needs k >= 1 and max_len >= 1");
  const auto& tokenizer = model.tokenizer();
  std::set<std::vector<TokenId>> produced;
  BeamResult result;
  for (std::size_t draw = 0; draw < k; ++draw) {
    GeneratedSequence seq;
    bool complete = false;
    while (!complete) {
      const auto lps = query_model(model, prompt, seq.tokens);
      std::vector<TokenId> order(lps.size());
      for (TokenId t = 0; t < order.size(); ++t) order[t] = t;
      std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return lps[a] > lps[b]; });
      std::optional<TokenId> pick;
      for (const auto t : order) {
        if (lps[t] == -std::numeric_limits<double>::infinity()) break;
        const bool ends = t == tokenizer.stop() || seq.tokens.size() + 1 == max_len;
        if (ends) {
          auto done = seq.tokens;
          done.push_back(t);
          if (produced.contains(done)) continue;
        }
        pick = t;
        break;
      }
      if (!pick) return result;
      seq.tokens.push_back(*pick);
      seq.logprob += lps[*pick];
      complete = *pick == tokenizer.stop() || seq.tokens.size() == max_len;
    }
    produced.insert(seq.tokens);
    result.sequences.push_back(std::move(seq));
  }
  std::stable_sort(result.sequences.begin(), result.sequences.end(), better);
  return result;
}

std::string_view to_string(Generation g) { return g == Generation::beam ? "beam" : "iterative"; }

Generation parse_generation(std::string_view s) {
  if (s == "beam") return Generation::beam;
  if (s == "iterative") return Generation::iterative;
  throw UsageError("unknown generation mode '" + std::string(s) + "' (expected beam|iterative)");
}

std::size_t default_max_len(std::size_t entity_count) {
  std::size_t digits = 1;
  for (std::size_t largest = entity_count > 0 ? entity_count - 1 : 0; largest >= 10; largest /= 10) ++digits;
  return digits + 1;
}

std::vector<ScoredEntity> map_sequences_to_entities(const BeamResult& result, const Tokenizer& tokenizer,
                                                    std::size_t entity_count) {
  std::vector<ScoredEntity> out;
  for (const auto& seq : result.sequences) {
    std::span<const TokenId> body = seq.tokens;
    if (!body.empty() && body.back() == tokenizer.stop()) body = body.first(body.size() - 1);
    auto text = tokenizer.decode(body);
    const auto first = text.find_first_not_of(" \t\r\n");
    const auto last = text.find_last_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    text = text.substr(first, last - first + 1);
    if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    if (text.size() > 1 && text.front() == '0') continue;
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || value >= entity_count) continue;
    const auto entity = static_cast<EntityId>(value);
    const auto it = std::find_if(out.begin(), out.end(), [&](const ScoredEntity& x) { return x.first == entity; });
    if (it == out.end()) {
      out.emplace_back(entity, seq.logprob);
    } else {
      const double hi = std::max(it->second, seq.logprob);
      const double lo = std::min(it->second, seq.logprob);
      it->second = hi + std::log1p(std::exp(lo - hi));
    }
  }
  return out;
}

std::string_view to_string(SoftmaxMode m) { return m == SoftmaxMode::logprob ? "logprob" : "probability"; }

SoftmaxMode parse_softmax_mode(std::string_view s) {
  if (s == "logprob") return SoftmaxMode::logprob;
  if (s == "probability") return SoftmaxMode::probability;
  throw UsageError("unknown softmax mode '" + std::string(s) + "' (expected logprob|probability)");
}

EntityDistribution build_entity_distribution(std::span<const ScoredEntity> scored, SoftmaxMode mode) {
  std::vector<EntityDistribution::Entry> scores;
  scores.reserve(scored.size());
  for (const auto& [e, lp] : scored) {
    scores.emplace_back(e, mode == SoftmaxMode::logprob ? lp : std::exp(lp));
  }
  return EntityDistribution::from_scores(std::move(scores));
}

}  // namespace tkg::lm
