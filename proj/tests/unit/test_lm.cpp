#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "oracles.hpp"
#include "test_support.hpp"
#include "tkg/core/error.hpp"
#include "tkg/core/hash.hpp"
#include "tkg/core/synthetic.hpp"
#include "tkg/lm/cache.hpp"

using namespace tkg;
using namespace tkg::lm;

namespace {

const prompt::PromptDoc kPrompt{"0:[1,rel_0,", 0, 0};

BeamResult make_result(std::vector<std::pair<std::string, double>> items, const Tokenizer& tok) {
  BeamResult r;
  for (const auto& [text, lp] : items) {
    GeneratedSequence s;
    for (const char c : text) s.tokens.push_back(*tok.find(std::string(1, c)));
    s.logprob = lp;
    r.sequences.push_back(s);
  }
  return r;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string write_history_model(const test::TempDir& dir, const std::string& policy) {
  const auto path = dir / ("history_" + policy + ".json");
  std::ofstream out(path);
  out << R"({"kind": "history", "policy": ")" << policy << R"(", "decay": 0.6, "noise": 0.05})";
  return path.string();
}

/// Forwards to a model and counts calls.
class CountingModel final : public LanguageModel {
 public:
  explicit CountingModel(const LanguageModel& inner) : inner_(inner) {}
  const Tokenizer& tokenizer() const override { return inner_.tokenizer(); }
  std::vector<double> next_token_logprobs(const prompt::PromptDoc& p, std::span<const TokenId> g) const override {
    ++calls;
    return inner_.next_token_logprobs(p, g);
  }
  std::string name() const override { return inner_.name(); }
  mutable std::atomic<std::size_t> calls{0};

 private:
  const LanguageModel& inner_;
};

}  // namespace

TEST_CASE("full-width beam search equals exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t vocab_size = 2 + rng() % 5;
    std::vector<std::string> vocab{"]"};
    for (std::size_t i = 1; i < vocab_size; ++i) vocab.push_back(std::to_string(i - 1));
    const std::size_t max_len = 1 + rng() % 3;
    const std::size_t k = 1 + rng() % 8;
    const auto model = oracle::random_table_model(vocab, rng(), trial % 3 == 0 ? 0.2 : 0.0);
    std::size_t width = 1;
    for (std::size_t i = 1; i < max_len; ++i) width *= vocab_size;
    const auto got = beam_generate(*model, kPrompt, k, max_len, width);
    const auto want = oracle::exhaustive_top_k(*model, kPrompt, k, max_len);
    REQUIRE(got.sequences.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.sequences[i].tokens == want[i].tokens);
      CHECK(std::abs(got.sequences[i].logprob - want[i].logprob) <= 1e-9);
    }
  }
}

TEST_CASE("narrow beams return genuine sequences in score order") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = oracle::random_table_model({"]", "0", "1", "2"}, rng());
    const std::size_t k = 1 + rng() % 4;
    const auto got = beam_generate(*model, kPrompt, k, 3);
    const auto all = oracle::exhaustive_top_k(*model, kPrompt, 1000, 3);
    CHECK(got.sequences.size() <= k);
    for (std::size_t i = 0; i < got.sequences.size(); ++i) {
      const auto& s = got.sequences[i];
      const auto it = std::find_if(all.begin(), all.end(), [&](const auto& a) { return a.tokens == s.tokens; });
      REQUIRE(it != all.end());
      CHECK(std::abs(it->logprob - s.logprob) <= 1e-12);
      if (i > 0) CHECK(got.sequences[i - 1].logprob >= s.logprob);
    }
  }
}

TEST_CASE("hand-set four-token table backend") {
  test::TempDir dir("table");
  const auto path = dir / "table.json";
  {
    nlohmann::json spec;
    spec["kind"] = "table";
    spec["vocab"] = {"0", "1", "]", "x"};
    spec["default"] = {std::log(0.4), std::log(0.3), std::log(0.2), std::log(0.1)};
    spec["rows"]["1"] = {std::log(0.5), std::log(0.1), std::log(0.35), std::log(0.05)};
    spec["rows"]["1|0"] = {std::log(0.1), std::log(0.08), std::log(0.72), std::log(0.1)};
    spec["rows"]["0"] = {std::log(0.25), std::log(0.25), std::log(0.25), std::log(0.25)};
    std::ofstream(path) << spec.dump();
  }
  const auto model = load_scripted_model(path.string());
  const auto got = beam_generate(*model, kPrompt, 2, 3, 16);
  const auto want = oracle::exhaustive_top_k(*model, kPrompt, 2, 3);
  REQUIRE(got.sequences.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(got.sequences[i].tokens == want[i].tokens);
    CHECK(std::abs(got.sequences[i].logprob - want[i].logprob) <= 1e-9);
  }
  CHECK(model->name().starts_with("scripted:table.json#"));
}

TEST_CASE("a certain stop token yields one empty completion") {
  const FunctionModel model(Tokenizer::digits(), [](const prompt::PromptDoc&, std::span<const TokenId>) {
    std::vector<double> lp(12, -std::numeric_limits<double>::infinity());
    lp[10] = 0.0;
    return lp;
  });
  const auto r = beam_generate(model, kPrompt, 5, 4);
  REQUIRE(r.sequences.size() == 1);
  CHECK(r.sequences[0].tokens == std::vector<TokenId>{10});
  CHECK(r.sequences[0].logprob == 0.0);
  CHECK(map_sequences_to_entities(r, model.tokenizer(), 100).empty());
  CHECK_THROWS_AS((void)beam_generate(model, kPrompt, 0, 4), UsageError);
}

TEST_CASE("iterative generation draws distinct completions") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto model = oracle::random_table_model({"]", "0", "1", "2"}, rng());
    const std::size_t k = 1 + rng() % 10;
    const auto r = iterative_generate(*model, kPrompt, k, 3);
    CHECK(r.sequences.size() <= k);
    std::set<std::vector<TokenId>> seen;
    for (const auto& s : r.sequences) CHECK(seen.insert(s.tokens).second);
    const auto mapped = map_sequences_to_entities(r, model->tokenizer(), 1000);
    std::set<EntityId> ids;
    for (const auto& [e, lp] : mapped) CHECK(ids.insert(e).second);
  }
}

TEST_CASE("sequences map to canonical entity ids") {
  Tokenizer tok({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "]", "a", "b", "c", " "});
  const auto one = map_sequences_to_entities(make_result({{"1024]", -1.0}}, tok), tok, 7128);
  REQUIRE(one.size() == 1);
  CHECK(one[0].first == 1024);
  CHECK(map_sequences_to_entities(make_result({{"abc]", -1.0}}, tok), tok, 7128).empty());
  CHECK(map_sequences_to_entities(make_result({{"042]", -1.0}}, tok), tok, 7128).empty());
  CHECK(map_sequences_to_entities(make_result({{"7128]", -1.0}}, tok), tok, 7128).empty());
  CHECK(map_sequences_to_entities(make_result({{"]", -1.0}}, tok), tok, 7128).empty());
  CHECK(map_sequences_to_entities(make_result({{"0]", -1.0}}, tok), tok, 7128).size() == 1);

  const auto merged =
      map_sequences_to_entities(make_result({{"42]", std::log(0.3)}, {"7]", std::log(0.2)}, {"42 ]", std::log(0.1)}}, tok),
                                tok, 100);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].first == 42);
  CHECK(merged[0].second == doctest::Approx(std::log(0.4)).epsilon(1e-12));
  CHECK(merged[1].first == 7);
  CHECK(default_max_len(7128) == 5);
  CHECK(default_max_len(10) == 2);
  CHECK(default_max_len(11) == 3);
}

TEST_CASE("entity distributions from log-probabilities") {
  const std::vector<ScoredEntity> single{{3, -2.0}};
  CHECK(build_entity_distribution(single).mass(3) == 1.0);
  const std::vector<ScoredEntity> two{{1, std::log(0.2)}, {2, std::log(0.1)}};
  const auto d = build_entity_distribution(two);
  CHECK(d.mass(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d.mass(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(build_entity_distribution({}).is_zero());
  const auto p = build_entity_distribution(two, SoftmaxMode::probability);
  CHECK(p.mass(1) == doctest::Approx(std::exp(0.2) / (std::exp(0.2) + std::exp(0.1))).epsilon(1e-12));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> lp(-3.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredEntity> scored;
    for (EntityId e = 0; e < 1 + rng() % 20; ++e) scored.emplace_back(e * 3, lp(rng));
    const auto base = build_entity_distribution(scored);
    CHECK(std::abs(base.total() - 1.0) <= 1e-9);
    auto shuffled = scored;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const double shift = lp(rng);
    for (auto& s : shuffled) s.second += shift;
    const auto other = build_entity_distribution(shuffled);
    for (const auto& [e, m] : base.entries()) CHECK(other.mass(e) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("backend output validation") {
  CHECK_NOTHROW(validate_logprobs(std::vector<double>{std::log(0.5), std::log(0.5)}, 2));
  CHECK_THROWS_AS(validate_logprobs(std::vector<double>{std::log(0.5)}, 2), DataError);
  CHECK_THROWS_AS(validate_logprobs(std::vector<double>{std::nan(""), 0.0}, 2), DataError);
  CHECK_THROWS_AS(validate_logprobs(std::vector<double>{std::log(0.5), std::log(0.2)}, 2), DataError);
  const FunctionModel bad(Tokenizer::digits(), [](const prompt::PromptDoc&, std::span<const TokenId>) {
    return std::vector<double>(12, 0.0);
  });
  CHECK_THROWS_AS((void)beam_generate(bad, kPrompt, 2, 3), DataError);
  CHECK_THROWS_AS((void)make_model("gpt-hosted"), UsageError);
  CHECK_THROWS_AS((void)load_scripted_model("/nonexistent/model.json"), DataError);
}

TEST_CASE("history backend copies objects from the prompt") {
  test::TempDir dir("hist");
  const prompt::RelationLexicon lex = prompt::RelationLexicon::numbered(2);
  const std::vector<Quadruple> facts{{5, 0, 17, 1}, {5, 0, 3, 2}, {5, 1, 17, 3}};
  const Query q{0, 5, 0, 4, std::nullopt};
  const auto doc = prompt::render_prompt(facts, q, lex);
  auto top = [&](const std::string& policy) {
    const auto model = load_scripted_model(write_history_model(dir, policy));
    const auto r = beam_generate(*model, doc, 3, 3);
    return map_sequences_to_entities(r, model->tokenizer(), 100);
  };
  CHECK(top("recency").front().first == 17);
  CHECK(top("reverse_recency").front().first == 17);
  CHECK(top("frequency").front().first == 17);
  const std::vector<Quadruple> recent_last{{5, 0, 3, 1}, {5, 0, 17, 2}};
  const auto doc2 = prompt::render_prompt(recent_last, q, lex);
  const auto rev = load_scripted_model(write_history_model(dir, "reverse_recency"));
  CHECK(map_sequences_to_entities(beam_generate(*rev, doc2, 2, 3), rev->tokenizer(), 100).front().first == 3);

  const auto cold = prompt::render_prompt({}, q, lex);
  const auto closed = beam_generate(*rev, cold, 5, 3);
  CHECK(closed.sequences.front().tokens == std::vector<TokenId>{rev->tokenizer().stop()});
}

TEST_CASE("cache records round-trip bit for bit") {
  test::TempDir dir("cache");
  std::mt19937_64 rng(99);
  std::normal_distribution<double> lp(-4.0, 3.0);
  const CacheMeta meta{"m", "abc", 20, 5, "beam"};
  std::map<QueryId, std::vector<ScoredEntity>> expected;
  {
    CacheWriter w(dir / "c.jsonl", meta);
    for (QueryId q = 0; q < 200; ++q) {
      std::vector<ScoredEntity> entries;
      for (std::size_t i = 0; i < rng() % 6; ++i) entries.emplace_back(static_cast<EntityId>(rng() % 7128), lp(rng));
      w.append(q, entries);
      expected[q] = entries;
    }
  }
  const auto cache = DistributionCache::load(dir / "c.jsonl");
  CHECK(cache.meta() == meta);
  CHECK(cache.size() == 200);
  for (const auto& [q, entries] : expected) {
    REQUIRE(cache.entries(q).size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      CHECK(cache.entries(q)[i].first == entries[i].first);
      CHECK(cache.entries(q)[i].second == entries[i].second);
    }
    const auto d = cache.distribution(q);
    CHECK(d.is_zero() == entries.empty());
    if (!entries.empty()) CHECK(std::abs(d.total() - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS((void)cache.entries(500), MissingArtifactError);
  CHECK_THROWS_AS((void)cache.distribution(500), MissingArtifactError);
  const std::vector<Query> qs{{5, 0, 0, 0, std::nullopt}, {777, 0, 0, 0, std::nullopt}};
  CHECK(cache.missing(qs) == std::vector<QueryId>{777});
  CHECK(format_record(3, std::vector<ScoredEntity>{{4, -0.5}}) == R"({"qid":3,"entries":[[4,"-0.5"]]})");
}

TEST_CASE("corrupted caches name the offending query") {
  test::TempDir dir("corrupt");
  const CacheMeta meta{"m", "abc", 20, 5, "beam"};
  const auto path = dir / "c.jsonl";
  {
    std::ofstream out(path);
    out << format_meta(meta) << "\n"
        << format_record(0, std::vector<ScoredEntity>{{1, -0.1}}) << "\n"
        << R"({"qid":41,"entries":[[1,"not-a-number"]]})" << "\n";
  }
  try {
    (void)DistributionCache::load(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("41") != std::string::npos);
  }
  {
    std::ofstream out(path);
    out << format_meta(meta) << "\n" << R"({"qid":58,"entries":[[1,"-0.)";
  }
  try {
    (void)DistributionCache::load(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("58") != std::string::npos);
  }

  CacheWriter resumed(path, meta);
  CHECK_FALSE(resumed.contains(58));
  resumed.append(58, std::vector<ScoredEntity>{{2, -1.0}});
  CHECK(DistributionCache::load(path).contains(58));

  CHECK_THROWS_AS(CacheWriter(path, CacheMeta{"m", "other", 20, 5, "beam"}), MissingArtifactError);
}

TEST_CASE("precompute is resumable, idempotent and deterministic") {
  test::TempDir dir("pre");
  SyntheticConfig cfg;
  cfg.entities = 30;
  cfg.timesteps = 10;
  const auto ds = make_recurrence_dataset(cfg);
  const auto inner = load_scripted_model(write_history_model(dir, "recency"));
  CountingModel model(*inner);
  const auto lexicon = prompt::RelationLexicon::numbered(ds.graph.relation_count());
  PrecomputeRequest req;
  req.model = &model;
  req.graph = &ds.graph;
  req.lexicon = &lexicon;
  req.k = 5;
  const CacheMeta meta{model.name(), "h1", 5, default_max_len(30), "beam"};
  const auto queries = ds.split.queries(SplitName::valid);

  const auto full = dir / "full.jsonl";
  {
    CacheWriter w(full, meta);
    const auto st = precompute_cache(req, queries, w);
    CHECK(st.computed == queries.size());
    CHECK(st.skipped == 0);
  }
  const auto bytes = read_all(full);
  model.calls = 0;
  {
    CacheWriter w(full, meta);
    const auto st = precompute_cache(req, queries, w);
    CHECK(st.computed == 0);
    CHECK(st.skipped == queries.size());
  }
  CHECK(model.calls == 0);
  CHECK(read_all(full) == bytes);

  const auto again = dir / "again.jsonl";
  {
    CacheWriter w(again, meta);
    (void)precompute_cache(req, queries, w);
  }
  CHECK(read_all(again) == bytes);

  const auto killed = dir / "killed.jsonl";
  {
    std::ofstream out(killed, std::ios::binary);
    const auto cut = bytes.find('\n', bytes.size() / 2);
    out << bytes.substr(0, cut + 1) << bytes.substr(cut + 1, 9);
  }
  {
    CacheWriter w(killed, meta);
    const auto st = precompute_cache(req, queries, w);
    CHECK(st.skipped > 0);
    CHECK(st.computed + st.skipped == queries.size());
  }
  CHECK(read_all(killed) == bytes);

  const auto cache = DistributionCache::load(full);
  for (const auto& q : queries) {
    const auto direct = generate_for_query(req, q);
    const auto& stored = cache.entries(q.id);
    REQUIRE(direct.size() == stored.size());
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct[i] == stored[i]);
  }
}
