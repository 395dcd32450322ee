#include <cmath>
#include <fstream>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "test_support.hpp"
#include "tkg/core/error.hpp"
#include "tkg/nn/optim.hpp"
#include "tkg/nn/tape.hpp"

using namespace tkg;
using namespace tkg::nn;

namespace {

ParameterSet small_params(std::uint64_t seed) {
  ParameterSet p;
  std::mt19937_64 rng(seed);
  init_normal(p.add("w", 3, 4), 0.7, rng);
  init_normal(p.add("emb", 5, 4), 0.7, rng);
  init_normal(p.add("b", 3, 1), 0.3, rng);
  init_normal(p.add("v", 1, 3), 0.5, rng);
  return p;
}

/// Exercises every differentiable tape operation.
Var composite(Tape& tape, ParameterSet& p, std::size_t variant) {
  const Var x = tape.row(p.get("emb"), variant % 5);
  const Var y = tape.row(p.get("emb"), (variant + 2) % 5);
  const Var h = tape.tanh(tape.add(tape.matvec(p.get("w"), x), tape.param(p.get("b"))));
  const Var s = tape.sigmoid(tape.matvec(p.get("w"), tape.mul(x, y)));
  const Var c = tape.cosine(x, y);
  const Var d = tape.dot(h, s);
  const Var e = tape.exp(tape.scale(tape.sub(h, s), 0.5));
  const Var parts[] = {h, s, e};
  const Var joined = tape.concat(parts);
  const Var sm = tape.softmax(tape.slice(joined, 2, 5));
  const Var nz = tape.normalize(tape.add_const(tape.exp(tape.slice(joined, 0, 4)), 0.1));
  const Var summed = tape.sum(std::span<const Var>(parts, 3));
  const Var k = tape.cos(tape.mul_scalar(summed, c));
  const Var r = tape.relu(tape.add_const(h, 0.05));
  const Var v = tape.matvec(p.get("v"), tape.add(k, r));
  const Var terms[] = {tape.log(tape.element(sm, variant % 5)), tape.log(tape.element(nz, 1)), d, v,
                       tape.sum(tape.mul(e, e))};
  return tape.sum(tape.concat(terms));
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("tape gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    auto p = small_params(seed);
    const auto result = oracle::check_gradients(p, [&](Tape& t) { return composite(t, p, seed); });
    INFO(result.worst);
    CHECK(result.checked == p.scalar_count());
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("segmented backward equals a single backward pass") {
  auto p = small_params(3);
  Tape whole;
  const Var prefix_a = whole.tanh(whole.matvec(p.get("w"), whole.row(p.get("emb"), 0)));
  const Var l1 = whole.dot(prefix_a, whole.slice(whole.row(p.get("emb"), 1), 0, 3));
  const Var l2 = whole.sum(whole.mul(prefix_a, prefix_a));
  const Var pair[] = {l1, l2};
  whole.backward(whole.scale(whole.sum(whole.concat(pair)), 0.5));
  std::vector<std::vector<double>> reference;
  for (const auto& t : p.tensors()) reference.push_back(t.grad);
  p.zero_grad();

  Tape seg;
  const Var shared = seg.tanh(seg.matvec(p.get("w"), seg.row(p.get("emb"), 0)));
  const auto mark = seg.mark();
  {
    const Var q1 = seg.dot(shared, seg.slice(seg.row(p.get("emb"), 1), 0, 3));
    seg.backward(q1, mark, 0.5);
    seg.truncate(mark);
  }
  {
    const Var q2 = seg.sum(seg.mul(shared, shared));
    seg.backward(q2, mark, 0.5);
    seg.truncate(mark);
  }
  seg.backward_prefix(mark);
  std::size_t i = 0;
  for (const auto& t : p.tensors()) {
    for (std::size_t j = 0; j < t.grad.size(); ++j) CHECK(t.grad[j] == doctest::Approx(reference[i][j]).epsilon(1e-12));
    ++i;
  }
}

TEST_CASE("tape edge cases") {
  Tape t;
  const double zeros[] = {0.0, 0.0};
  const double ones[] = {1.0, 2.0};
  const Var z = t.constant(zeros);
  const Var o = t.constant(ones);
  CHECK(t.scalar(t.cosine(z, o)) == 0.0);
  CHECK(t.value(t.softmax(t.constant(std::vector<double>{1000.0, 1000.0})))[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS((void)t.slice(o, 1, 2), std::out_of_range);
  ParameterSet p;
  p.add("w", 2, 2);
  CHECK_THROWS_AS((void)t.matvec(p.get("w"), t.constant(std::vector<double>{1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(p.add("w", 1, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)p.get("missing"), std::out_of_range);
}

TEST_CASE("the first Adam step moves each weight by the learning rate") {
  ParameterSet p;
  auto& w = p.add("w", 1, 3);
  w.value = {1.0, -2.0, 0.5};
  w.grad = {0.3, -4.0, 0.0};
  Adam adam(p, {.lr = 0.01});
  adam.step();
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)));
  CHECK(w.value[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)));
  CHECK(w.value[2] == 0.5);
  CHECK(w.grad == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(adam.steps() == 1);

  w.grad = {0.3, -4.0, 0.0};
  adam.step();
  const double m = 0.9 * 0.1 * 0.3 + 0.1 * 0.3;
  const double v = 0.999 * 0.001 * 0.09 + 0.001 * 0.09;
  const double mh = m / (1 - 0.81);
  const double vh = v / (1 - 0.999 * 0.999);
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8)));
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  test::TempDir dir("ckpt");
  auto p = small_params(4);
  round_to_float(p);
  const auto path = dir / "a.ckpt";
  save_checkpoint(path, p, {"rule", "cafe", R"({"x":1})"});
  const auto header = read_checkpoint_header(path);
  CHECK(header.kind == "rule");
  CHECK(header.config_hash == "cafe");

  auto q = small_params(5);
  load_checkpoint(path, q);
  for (std::size_t i = 0; i < p.tensors().size(); ++i) CHECK(q.tensors()[i].value == p.tensors()[i].value);

  save_checkpoint(dir / "b.ckpt", q, {"rule", "cafe", R"({"x":1})"});
  CHECK(read_all(path) == read_all(dir / "b.ckpt"));

  ParameterSet other;
  other.add("w", 3, 5);
  CHECK_THROWS_AS(load_checkpoint(path, other), DataError);

  const auto bytes = read_all(path);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt", q), DataError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "xx";
  CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt", q), DataError);
  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS((void)read_checkpoint_header(dir / "junk.ckpt"), DataError);
  CHECK_THROWS_AS((void)read_checkpoint_header(dir / "none.ckpt"), MissingArtifactError);
  CHECK(bytes.substr(0, 8) == "TKGCKPT1");
}
