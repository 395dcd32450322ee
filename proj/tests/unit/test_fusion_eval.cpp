#include <algorithm>
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
#include "tkg/core/synthetic.hpp"
#include "tkg/eval/eval.hpp"
#include "tkg/fusion/fusion.hpp"

using namespace tkg;
using fusion::FusionConfig;
using fusion::FusionMode;

namespace {

EntityDistribution dist(std::vector<EntityDistribution::Entry> w) { return EntityDistribution::from_weights(std::move(w)); }

EntityDistribution random_dist(std::mt19937_64& rng, std::size_t entities, std::size_t max_size, bool allow_zero) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<EntityDistribution::Entry> w;
  const std::size_t n = (allow_zero ? 0 : 1) + rng() % max_size;
  std::set<EntityId> used;
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<EntityId>(rng() % entities);
    if (used.insert(e).second) w.emplace_back(e, u(rng));
  }
  return dist(std::move(w));
}

/// Scores quantized to a few levels so ties are common.
EntityDistribution tied_dist(std::mt19937_64& rng, std::size_t entities) {
  std::vector<EntityDistribution::Entry> w;
  for (EntityId e = 0; e < entities; ++e) {
    if (rng() % 3 == 0) w.emplace_back(e, static_cast<double>(1 + rng() % 4));
  }
  return dist(std::move(w));
}

std::string write_history_model(const test::TempDir& dir) {
  const auto path = dir / "history.json";
  std::ofstream(path) << R"({"kind": "history", "policy": "recency", "decay": 0.5, "noise": 0.1})";
  return path.string();
}

}  // namespace

TEST_CASE("mixture fusion of a hand example") {
  const auto llm = dist({{0, 0.8}, {1, 0.2}});
  const auto ada = dist({{1, 0.5}, {2, 0.5}});
  const auto f = fusion::fuse(llm, ada, 0.5);
  REQUIRE(f.size() == 3);
  CHECK(f.mass(0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f.mass(1) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(f.mass(2) == doctest::Approx(0.25).epsilon(1e-12));

  const auto p = fusion::fuse(llm, ada, 0.5, {FusionMode::product, 1e-6});
  const double w0 = (0.8 + 1e-6) * std::sqrt(1e-6), w1 = (0.2 + 1e-6) * std::sqrt(0.5 + 1e-6),
               w2 = 1e-6 * std::sqrt(0.5 + 1e-6);
  CHECK(p.mass(1) == doctest::Approx(w1 / (w0 + w1 + w2)).epsilon(1e-12));
  CHECK(fusion::parse_fusion_mode("product") == FusionMode::product);
  CHECK_THROWS_AS((void)fusion::parse_fusion_mode("sum"), UsageError);
  CHECK_THROWS_AS((void)fusion::fuse(llm, ada, 1.5), std::invalid_argument);
}

TEST_CASE("fusion degrades to the non-zero input") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_dist(rng, 30, 8, false);
    const auto b = random_dist(rng, 30, 8, false);
    const double w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const FusionConfig cfg{trial % 2 ? FusionMode::product : FusionMode::mixture, 1e-6};
    CHECK(fusion::fuse(EntityDistribution::zero(), b, w, cfg) == b);
    CHECK(fusion::fuse(a, EntityDistribution::zero(), w, cfg) == a);
    CHECK(fusion::fuse(EntityDistribution::zero(), EntityDistribution::zero(), w, cfg).is_zero());
    const auto at0 = fusion::fuse(a, b, 0.0);
    const auto at1 = fusion::fuse(a, b, 1.0);
    REQUIRE(at0.support() == a.support());
    REQUIRE(at1.support() == b.support());
    for (const auto& [e, m] : a.entries()) CHECK(at0.mass(e) == doctest::Approx(m).epsilon(1e-12));
    for (const auto& [e, m] : b.entries()) CHECK(at1.mass(e) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("fused distributions are normalized and mixture mass moves toward the adapter") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto a = random_dist(rng, 50, 10, true);
    const auto b = random_dist(rng, 50, 10, true);
    const double w = u(rng);
    const FusionConfig cfg{trial % 2 ? FusionMode::product : FusionMode::mixture, 1e-6};
    const auto f = fusion::fuse(a, b, w, cfg);
    if (a.is_zero() && b.is_zero()) {
      CHECK(f.is_zero());
      continue;
    }
    CHECK(std::abs(f.total() - 1.0) <= 1e-6);
    for (const auto& [e, m] : f.entries()) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0 + 1e-12);
    }
    if (cfg.mode == FusionMode::mixture && !a.is_zero() && !b.is_zero()) {
      const double w2 = std::min(1.0, w + 0.1);
      const auto g = fusion::fuse(a, b, w2);
      for (const auto& [e, m] : f.entries()) {
        const double slope = b.mass(e) - a.mass(e);
        if (slope > 1e-12) CHECK(g.mass(e) >= m - 1e-12);
        if (slope < -1e-12) CHECK(g.mass(e) <= m + 1e-12);
      }
    }
  }
}

TEST_CASE("tape fusion and loss agree with the plain versions") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto llm = random_dist(rng, 20, 6, true);
    const auto ada = random_dist(rng, 20, 6, true);
    const double w = u(rng);
    const FusionConfig cfg{trial % 2 ? FusionMode::product : FusionMode::mixture, 1e-4};
    nn::Tape tape;
    adapters::TapeScores scores;
    std::vector<double> probs;
    for (const auto& [e, m] : ada.entries()) {
      scores.candidates.push_back(e);
      probs.push_back(m);
    }
    if (!probs.empty()) scores.probs = tape.constant(probs);
    const auto tf = fusion::fuse(tape, llm, scores, tape.constant(w), cfg);
    const auto plain = fusion::fuse(llm, ada, w, cfg);
    CHECK(tf.differentiable == !ada.is_zero());
    REQUIRE(tf.support.size() == plain.size());
    const auto values = tf.support.empty() ? std::vector<double>{} : tape.value(tf.probs);
    for (std::size_t i = 0; i < tf.support.size(); ++i) {
      CHECK(values[i] == doctest::Approx(plain.mass(tf.support[i])).epsilon(1e-12));
    }
    const auto answer = static_cast<EntityId>(rng() % 20);
    CHECK(tape.scalar(fusion::bce_loss(tape, tf, answer)) ==
          doctest::Approx(fusion::bce_loss(plain, answer)).epsilon(1e-9));
  }
}

TEST_CASE("binary cross-entropy reference values") {
  CHECK(std::abs(fusion::bce_loss(EntityDistribution::point_mass(3), 3)) <= 1e-7);
  const double wrong = fusion::bce_loss(EntityDistribution::point_mass(4), 3);
  CHECK(std::isfinite(wrong));
  CHECK(wrong == doctest::Approx(-2.0 * std::log(1e-8)).epsilon(1e-9));
  CHECK(fusion::bce_loss(dist({{3, 0.5}, {4, 0.5}}), 3) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  CHECK(fusion::bce_loss(EntityDistribution::zero(), 3) == doctest::Approx(-std::log(1e-8)).epsilon(1e-12));
  nn::Tape tape;
  CHECK(tape.scalar(fusion::bce_loss(tape, fusion::TapeFused{}, 3)) == doctest::Approx(-std::log(1e-8)));
}

TEST_CASE("filtered rank reference cases") {
  const auto d = dist({{0, 0.5}, {1, 0.3}, {2, 0.2}});
  CHECK(eval::filtered_rank(d, 0, {}, 10) == 1);
  CHECK(eval::filtered_rank(d, 2, {}, 10) == 3);
  const EntityId f1[] = {0, 1};
  CHECK(eval::filtered_rank(d, 2, f1, 10) == 1);
  const EntityId f2[] = {2};
  CHECK(eval::filtered_rank(d, 2, f2, 10) == 3);

  std::vector<EntityDistribution::Entry> ten;
  for (EntityId e = 0; e < 10; ++e) ten.emplace_back(e, 1.0 + e);
  CHECK(eval::filtered_rank(dist(ten), 50, {}, 100) == 55);
  CHECK(eval::filtered_rank(EntityDistribution::zero(), 5, {}, 100) == 50);
  CHECK(eval::filtered_rank(dist({{0, 0.5}, {1, 0.5}}), 0, {}, 10) == 1);
  CHECK(eval::filtered_rank(dist({{0, 1.0}, {1, 1.0}, {2, 1.0}}), 0, {}, 10) == 2);
}

TEST_CASE("filtered rank agrees with sorting every entity") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t entities = 2 + rng() % 40;
    const auto d = trial % 2 ? tied_dist(rng, entities) : random_dist(rng, entities, 12, true);
    const auto answer = static_cast<EntityId>(rng() % entities);
    std::vector<EntityId> filter;
    for (std::size_t i = 0; i < rng() % 6; ++i) filter.push_back(static_cast<EntityId>(rng() % entities));
    CHECK(eval::filtered_rank(d, answer, filter, entities) == oracle::sort_rank(d, answer, filter, entities));
  }
}

TEST_CASE("filtering removes only other true answers and never hurts the rank") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 200; ++trial) {
    auto facts = test::random_facts(rng, 15, 3, 6, 60);
    const auto g = TemporalKG(15, 3, facts).augment_inverse();
    const auto& f = g.facts()[rng() % g.fact_count()];
    const Query q{0, f.subject, f.relation, f.time, f.object};
    const auto filter = same_time_filter_set(g, q);
    for (const auto e : filter) {
      CHECK(e != f.object);
      CHECK(std::find(g.facts().begin(), g.facts().end(), Quadruple{f.subject, f.relation, e, f.time}) !=
            g.facts().end());
    }
    const auto d = tied_dist(rng, 15);
    CHECK(eval::filtered_rank(d, f.object, filter, 15) <= eval::filtered_rank(d, f.object, {}, 15));
  }
}

TEST_CASE("evaluation of oracle and empty systems") {
  SyntheticConfig cfg;
  cfg.entities = 40;
  cfg.timesteps = 12;
  const auto ds = make_recurrence_dataset(cfg);
  const auto queries = ds.split.queries(SplitName::test);
  REQUIRE(!queries.empty());

  const auto perfect = eval::evaluate(ds.graph, queries, [](const Query& q) {
    return eval::Prediction{EntityDistribution::point_mass(*q.answer), 1, 0};
  });
  CHECK(perfect.overall.hits1 == 1.0);
  CHECK(perfect.overall.hits10 == 1.0);
  CHECK(perfect.overall.queries == queries.size());
  CHECK(perfect.forward.queries + perfect.inverse.queries == queries.size());

  std::vector<eval::RankRecord> ranks;
  const auto empty = eval::evaluate(
      ds.graph, queries, [](const Query&) { return eval::Prediction{}; }, &ranks);
  std::size_t within10 = 0;
  for (const auto& q : queries) {
    const auto filter = same_time_filter_set(ds.graph, q);
    within10 += 1 + (cfg.entities - 1 - filter.size()) / 2 <= 10;
  }
  CHECK(empty.overall.hits10 == doctest::Approx(static_cast<double>(within10) / queries.size()));
  CHECK(ranks.size() == queries.size());
  for (const auto& r : ranks) CHECK(r.union_candidates == 0);

  eval::MetricsReport report = perfect;
  report.mode = "full";
  report.split = "test";
  report.config_hash = "abc";
  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["mode"] == "full");
  CHECK(j["overall"]["hits@1"] == 1.0);
  CHECK(j["overall"]["queries"] == queries.size());
  CHECK(report.to_text().find("overall") != std::string::npos);
  CHECK(report.to_text().find("1.0000") != std::string::npos);
  std::ostringstream out;
  eval::write_ranks(ranks, out);
  const auto lines = out.str();
  CHECK(static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n')) == ranks.size());

  const Query unanswered{0, 1, 0, 3, std::nullopt};
  CHECK_THROWS_AS(eval::evaluate(ds.graph, std::span<const Query>(&unanswered, 1),
                                 [](const Query&) { return eval::Prediction{}; }),
                  UsageError);
}

TEST_CASE("ablation modes list every missing artifact") {
  eval::AblationInputs none;
  try {
    (void)eval::make_system(eval::AblationMode::full, none);
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("beam cache") != std::string::npos);
    CHECK(msg.find("adapter") != std::string::npos);
    CHECK(msg.find("gate") != std::string::npos);
    CHECK(msg.find("dataset") != std::string::npos);
  }
  CHECK_THROWS_AS((void)eval::make_system(eval::AblationMode::no_bsl, none), MissingArtifactError);
  CHECK_THROWS_AS((void)eval::make_system(eval::AblationMode::tlogic_static, none), MissingArtifactError);
  CHECK_THROWS_AS((void)eval::parse_ablation_mode("everything"), UsageError);
  for (const auto* m : {"full", "no_bsl", "no_adapter", "adapter_only", "tlogic_static"}) {
    CHECK(eval::to_string(eval::parse_ablation_mode(m)) == m);
  }
}

TEST_CASE("cache-only ablations read the caches as stored") {
  test::TempDir dir("ablate");
  SyntheticConfig cfg;
  cfg.entities = 30;
  cfg.timesteps = 10;
  const auto ds = make_recurrence_dataset(cfg);
  const auto model = lm::load_scripted_model(write_history_model(dir));
  const auto lexicon = prompt::RelationLexicon::numbered(ds.graph.relation_count());
  lm::PrecomputeRequest req;
  req.model = model.get();
  req.graph = &ds.graph;
  req.lexicon = &lexicon;
  req.k = 4;
  lm::DistributionCache beam, iterative;
  auto iter_req = req;
  iter_req.generation = lm::Generation::iterative;
  const auto test_queries = ds.split.queries(SplitName::test);
  for (const auto& q : test_queries) {
    beam.insert(q.id, lm::generate_for_query(req, q));
    iterative.insert(q.id, lm::generate_for_query(iter_req, q));
  }
  for (const auto& q : test_queries) {
    const auto& entries = iterative.entries(q.id);
    CHECK(entries.size() <= req.k);
    std::set<EntityId> ids;
    for (const auto& [e, lp] : entries) CHECK(ids.insert(e).second);
  }

  eval::AblationInputs in;
  in.dataset = &ds;
  in.beam_cache = &beam;
  const auto report = eval::run_ablation(eval::AblationMode::no_adapter, in, SplitName::test);
  const auto direct = eval::evaluate(ds.graph, test_queries, [&](const Query& q) {
    return eval::Prediction{beam.distribution(q.id), 0, 0};
  });
  CHECK(report.overall.hits1 == direct.overall.hits1);
  CHECK(report.overall.hits10 == direct.overall.hits10);
  CHECK(report.mode == "no_adapter");

  CHECK_THROWS_AS((void)eval::run_ablation(eval::AblationMode::no_adapter, in, SplitName::valid), MissingArtifactError);
}
