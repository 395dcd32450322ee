#include <algorithm>
#include <fstream>
#include <random>

#include <doctest.h>

#include "test_support.hpp"
#include "tkg/core/error.hpp"
#include "tkg/prompt/prompt.hpp"
#include "tkg/retrieval/retrieval.hpp"

using namespace tkg;
using namespace tkg::retrieval;

namespace {

std::vector<Quadruple> oracle_entity_key(const TemporalKG& g, const Query& q, std::size_t budget) {
  std::vector<Quadruple> exact, other;
  for (const auto& f : g.facts()) {
    if (f.subject != q.subject || f.time >= q.time) continue;
    (f.relation == q.relation ? exact : other).push_back(f);
  }
  auto recency = [](const Quadruple& a, const Quadruple& b) {
    return std::make_tuple(-a.time, a.relation, a.object) < std::make_tuple(-b.time, b.relation, b.object);
  };
  std::sort(exact.begin(), exact.end(), recency);
  std::sort(other.begin(), other.end(), recency);
  exact.insert(exact.end(), other.begin(), other.end());
  if (exact.size() > budget) exact.resize(budget);
  std::sort(exact.begin(), exact.end(), [](const Quadruple& a, const Quadruple& b) {
    return std::tie(a.time, a.relation, a.object) < std::tie(b.time, b.relation, b.object);
  });
  return exact;
}

}  // namespace

TEST_CASE("entity-key retrieval fills exact matches before subject-only facts") {
  std::vector<Quadruple> facts;
  for (Time t = 0; t < 3; ++t) facts.push_back({0, 0, static_cast<EntityId>(1 + t), t});
  for (Time t = 0; t < 5; ++t) facts.push_back({0, 1, static_cast<EntityId>(4 + t), t + 3});
  const TemporalKG g(10, 2, facts);
  const Query q{0, 0, 0, 10, std::nullopt};
  const auto got = retrieve_entity_key(g.history_before(10), q, 4);
  REQUIRE(got.size() == 4);
  CHECK(std::count_if(got.begin(), got.end(), [](const Quadruple& f) { return f.relation == 0; }) == 3);
  CHECK(got.back() == Quadruple{0, 1, 8, 7});
  CHECK(std::is_sorted(got.begin(), got.end(), [](const auto& a, const auto& b) { return a.time < b.time; }));

  const Query cold{0, 9, 0, 10, std::nullopt};
  CHECK(retrieve_entity_key(g.history_before(10), cold, 4).empty());
}

TEST_CASE("entity-key retrieval matches a brute-force scan and never leaks") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = TemporalKG(6, 3, test::random_facts(rng, 6, 3, 10, 70)).augment_inverse();
    for (int k = 0; k < 20; ++k) {
      const Query q{0, static_cast<EntityId>(rng() % 6), static_cast<RelationId>(rng() % 6),
                    static_cast<Time>(rng() % 11), std::nullopt};
      const std::size_t budget = 1 + rng() % 8;
      const auto got = retrieve_entity_key(g.history_before(g.time_count()), q, budget);
      CHECK(got == oracle_entity_key(g, q, budget));
      for (const auto& f : got) CHECK(f.time < q.time);
    }
  }
}

TEST_CASE("rule-based retrieval follows rule bodies and falls back") {
  std::vector<Quadruple> facts{{0, 0, 1, 0}, {0, 1, 2, 1}, {0, 2, 3, 2}, {0, 1, 4, 3}};
  const auto g = TemporalKG(5, 3, facts).augment_inverse();
  const auto view = g.history_before(g.time_count());
  const Query q{0, 0, 0, 5, std::nullopt};

  const rules::RuleStore none({rules::TemporalRule{2, {0}, 0.9, 1, 1}});
  CHECK(retrieve_rule_based(view, q, none, 10, 0.0) == retrieve_entity_key(view, q, 10));

  const rules::RuleStore store({rules::TemporalRule{0, {1, 2}, 0.6, 1, 1}, rules::TemporalRule{0, {2}, 0.2, 1, 1}});
  const auto by_rule = retrieve_rule_based(view, q, store, 10, 0.5);
  REQUIRE(by_rule.size() == 2);
  for (const auto& f : by_rule) CHECK(f.relation == 1);
  CHECK(retrieve_rule_based(view, q, store, 10, 0.0).size() == 3);
  CHECK(retrieve_rule_based(view, q, store, 1, 0.5) == std::vector<Quadruple>{{0, 1, 4, 3}});

  const rules::RuleStore unmatched({rules::TemporalRule{0, {5}, 0.9, 1, 1}});
  CHECK(retrieve_rule_based(view, q, unmatched, 10, 0.0) == retrieve_entity_key(view, q, 10));

  RetrievalConfig cfg;
  cfg.strategy = Strategy::rule_based;
  CHECK_THROWS_AS((void)retrieve(view, q, cfg, nullptr), MissingArtifactError);
  cfg.history_budget = 0;
  CHECK_THROWS_AS((void)retrieve(view, q, cfg, &store), UsageError);
  CHECK(parse_strategy("rule_based") == Strategy::rule_based);
  CHECK_THROWS_AS((void)parse_strategy("bm25"), UsageError);
}

TEST_CASE("prompt lines and the open query") {
  const prompt::RelationLexicon lex({"Accuse", "Consult"});
  const std::vector<Quadruple> facts{{3, 0, 7, 12}};
  const Query q{0, 5, 1, 20, std::nullopt};
  const auto doc = prompt::render_prompt(facts, q, lex);
  CHECK(doc.text == "12:[3,Accuse,7]\n20:[5,Consult,");
  CHECK(doc.query_suffix() == "20:[5,Consult,");
  CHECK(doc.fact_count == 1);

  const auto alone = prompt::render_prompt({}, q, lex);
  CHECK(alone.text == "20:[5,Consult,");
  CHECK(alone.query_suffix_offset == 0);

  const auto paren = prompt::render_prompt(facts, q, lex, {.parenthesized = true});
  CHECK(paren.text == "12:[(3,Accuse,7)]\n20:[5,Consult,");

  const Query inverse{0, 7, 3, 20, std::nullopt};
  CHECK(prompt::render_prompt({}, inverse, lex).text == "20:[7,inv_Consult,");
  CHECK_THROWS_AS((void)lex.text(4), UsageError);
}

TEST_CASE("lexicon normalizes reserved characters and loads from TSV") {
  const prompt::RelationLexicon lex({"Make statement", "a,b]"});
  CHECK(lex.text(0) == "Make_statement");
  CHECK(lex.text(1) == "a_b_");
  CHECK(prompt::RelationLexicon::numbered(3).text(4) == "inv_rel_1");

  test::TempDir dir("lex");
  {
    std::ofstream out(dir / "rel.tsv");
    out << "1\tConsult\n0\tAccuse\n";
  }
  const auto loaded = prompt::RelationLexicon::load(dir / "rel.tsv", 2);
  CHECK(loaded.text(0) == "Accuse");
  CHECK_THROWS_AS((void)prompt::RelationLexicon::load(dir / "rel.tsv", 3), DataError);
}

TEST_CASE("rendered prompts parse back exactly") {
  std::mt19937_64 rng(41);
  const prompt::RelationLexicon lex({"Accuse", "Host a visit", "Sign_agreement"});
  for (int trial = 0; trial < 300; ++trial) {
    auto facts = test::random_facts(rng, 9000, 6, 30, rng() % 12);
    std::sort(facts.begin(), facts.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    const Query q{0, static_cast<EntityId>(rng() % 9000), static_cast<RelationId>(rng() % 6), 30, std::nullopt};
    const bool paren = rng() % 2 == 0;
    const auto doc = prompt::render_prompt(facts, q, lex, {.parenthesized = paren});

    const auto head = std::string_view(doc.text).substr(0, doc.query_suffix_offset);
    CHECK(static_cast<std::size_t>(std::count(head.begin(), head.end(), ']')) == doc.fact_count);
    CHECK(doc.query_suffix().find(']') == std::string_view::npos);

    const auto parsed = prompt::parse_prompt(doc.text);
    REQUIRE(parsed);
    REQUIRE(parsed->facts.size() == facts.size());
    for (std::size_t i = 0; i < facts.size(); ++i) {
      CHECK(parsed->facts[i].time == facts[i].time);
      CHECK(parsed->facts[i].subject == facts[i].subject);
      CHECK(parsed->facts[i].relation == lex.text(facts[i].relation));
      CHECK(parsed->facts[i].object == facts[i].object);
    }
    CHECK(parsed->query_time == 30);
    CHECK(parsed->query_subject == q.subject);
    CHECK(parsed->query_relation == lex.text(q.relation));
  }
  CHECK_FALSE(prompt::parse_prompt("12:[x,Accuse,7]\n20:[5,Consult,"));
  CHECK_FALSE(prompt::parse_prompt("12:[3,Accuse,7]\n20:[5,Consult"));
}
