#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cora/errors.hpp"
#include "cora/gradcheck.hpp"
#include "cora/graph.hpp"
#include "cora/optim.hpp"
#include "cora/random.hpp"
#include "cora/tensor.hpp"

using namespace cora;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor2 t(r, c);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor2 loop_matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

using Builder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

// Scalar loss sum(op(params) * R) with a fixed random R, so every output entry matters.
ScalarFunction weighted_sum(const Builder& build, const Tensor2& weights) {
  return [build, weights](const std::vector<Tensor2>& params, std::vector<Tensor2>* grads) {
    Graph g;
    std::vector<NodeId> ids;
    for (const auto& p : params) ids.push_back(g.parameter(p));
    NodeId out = build(g, ids);
    if (g.value(out).rows() != 1 || g.value(out).cols() != 1) out = g.sum(g.hadamard(out, g.constant(weights)));
    if (grads != nullptr) {
      g.backward(out);
      grads->clear();
      for (auto id : ids) grads->push_back(g.grad(id));
    }
    return g.value(out)[0];
  };
}

double check_op(const Builder& build, const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor2> params;
  for (auto [r, c] : shapes) params.push_back(random_tensor(r, c, rng, lo, hi));
  Graph probe;
  std::vector<NodeId> ids;
  for (const auto& p : params) ids.push_back(probe.constant(p));
  const Tensor2 out = probe.value(build(probe, ids));
  const Tensor2 weights = random_tensor(out.rows(), out.cols(), rng, 0.5, 1.5);
  return grad_check(weighted_sum(build, weights), params, 1e-5).max_relative_error;
}

}  // namespace

TEST_CASE("tensor construction enforces rows x cols") {
  CHECK_THROWS_AS(Tensor2(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor2 t(2, 3, 1.5);
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 1.5);
}

TEST_CASE("matmul identity and dot product") {
  const Tensor2 id = Tensor2::from_rows({{1, 0}, {0, 1}});
  const Tensor2 b = Tensor2::from_rows({{3, 4}, {5, 6}});
  CHECK(matmul(id, b) == b);
  CHECK(matmul(Tensor2::from_rows({{1, 2}}), Tensor2::from_rows({{3}, {4}})) == Tensor2::from_rows({{11}}));
}

TEST_CASE("matmul matches a triple-loop product exactly") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor2 a = random_tensor(3, 4, rng);
    const Tensor2 b = random_tensor(4, 2, rng);
    CHECK(max_abs_diff(matmul(a, b), loop_matmul(a, b)) == 0.0);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor2(2, 3), Tensor2(2, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("non-finite results are reported") {
  const Tensor2 big = Tensor2::from_rows({{1e308, 1e308}});
  CHECK_THROWS_AS(matmul(big, Tensor2::from_rows({{10}, {10}})), NumericError);
}

TEST_CASE("softmax examples") {
  auto s = softmax(std::vector<double>{0, 0, 0});
  for (double v : s) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  s = softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(7.0)});
  CHECK(std::abs(s[0] - 0.1) < 1e-12);
  CHECK(std::abs(s[1] - 0.2) < 1e-12);
  CHECK(std::abs(s[2] - 0.7) < 1e-12);

  s = softmax(std::vector<double>{1000, 1000, 999});
  double sum = 0.0;
  for (double v : s) {
    CHECK(std::isfinite(v));
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);

  CHECK_THROWS_AS(softmax(std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, NAN}), DomainError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 7);
    for (auto& x : v) x = u(rng);
    const double c = u(rng);
    std::vector<double> shifted = v;
    for (auto& x : shifted) x += c;
    const auto a = softmax(v);
    const auto b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0);
      CHECK(std::abs(a[i] - b[i]) <= 1e-12);
      sum += a[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward of sum(W) is all ones") {
  Graph g;
  const NodeId w = g.parameter(Tensor2::from_rows({{1, -2, 3}, {4, 5, -6}}));
  const NodeId f = g.sum(w);
  g.backward(f);
  CHECK(g.grad(w) == Tensor2(2, 3, 1.0));
}

TEST_CASE("backward of ||W||^2 / 2 is W") {
  Graph g;
  const Tensor2 wv = Tensor2::from_rows({{1, -2}, {0.5, 3}});
  const NodeId w = g.parameter(wv);
  const NodeId f = g.scale(g.sum(g.hadamard(w, w)), 0.5);
  g.backward(f);
  CHECK(max_abs_diff(g.grad(w), wv) == 0.0);
}

TEST_CASE("backward rejects a non-scalar root") {
  Graph g;
  const NodeId w = g.parameter(Tensor2(2, 2, 1.0));
  CHECK_THROWS_AS(g.backward(w), ContractError);
}

TEST_CASE("constants receive no gradient") {
  Graph g;
  const NodeId c = g.constant(Tensor2(1, 2, 1.0));
  const NodeId w = g.parameter(Tensor2(1, 2, 2.0));
  const NodeId f = g.sum(g.hadamard(c, w));
  g.backward(f);
  CHECK_FALSE(g.has_grad(c));
  CHECK_THROWS_AS(g.grad(c), ContractError);
  CHECK(g.grad(w) == Tensor2(1, 2, 1.0));
}

TEST_CASE("gradients accumulate over multiple consumers") {
  Graph g;
  const NodeId w = g.parameter(Tensor2::from_rows({{2.0}}));
  const NodeId f = g.sum(g.add(g.hadamard(w, w), g.scale(w, 3.0)));
  g.backward(f);
  CHECK(g.grad(w)[0] == doctest::Approx(2 * 2.0 + 3.0));
}

TEST_CASE("every op matches central differences on random 3x3 instances") {
  struct OpCase {
    const char* name;
    Builder build;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    double lo = -1.0;
    double hi = 1.0;
  };
  const std::vector<OpCase> cases = {
      {"matmul", [](Graph& g, const std::vector<NodeId>& p) { return g.matmul(p[0], p[1]); }, {{3, 3}, {3, 3}}},
      {"transpose", [](Graph& g, const std::vector<NodeId>& p) { return g.transpose(p[0]); }, {{3, 3}}},
      {"add", [](Graph& g, const std::vector<NodeId>& p) { return g.add(p[0], p[1]); }, {{3, 3}, {3, 3}}},
      {"sub", [](Graph& g, const std::vector<NodeId>& p) { return g.sub(p[0], p[1]); }, {{3, 3}, {3, 3}}},
      {"add_row", [](Graph& g, const std::vector<NodeId>& p) { return g.add_row(p[0], p[1]); }, {{3, 3}, {1, 3}}},
      {"hadamard", [](Graph& g, const std::vector<NodeId>& p) { return g.hadamard(p[0], p[1]); }, {{3, 3}, {3, 3}}},
      {"scale", [](Graph& g, const std::vector<NodeId>& p) { return g.scale(p[0], -1.7); }, {{3, 3}}},
      {"add_scalar", [](Graph& g, const std::vector<NodeId>& p) { return g.add_scalar(p[0], 0.3); }, {{3, 3}}},
      {"scale_by", [](Graph& g, const std::vector<NodeId>& p) { return g.scale_by(p[0], p[1]); }, {{3, 3}, {1, 1}}},
      {"tanh", [](Graph& g, const std::vector<NodeId>& p) { return g.tanh(p[0]); }, {{3, 3}}, -2.0, 2.0},
      {"silu", [](Graph& g, const std::vector<NodeId>& p) { return g.silu(p[0]); }, {{3, 3}}, -3.0, 3.0},
      {"exp", [](Graph& g, const std::vector<NodeId>& p) { return g.exp(p[0]); }, {{3, 3}}},
      {"softmax_rows", [](Graph& g, const std::vector<NodeId>& p) { return g.softmax_rows(p[0]); }, {{3, 3}}, -2.0,
       2.0},
      {"sum", [](Graph& g, const std::vector<NodeId>& p) { return g.sum(g.hadamard(p[0], p[0])); }, {{3, 3}}},
      {"mean", [](Graph& g, const std::vector<NodeId>& p) { return g.mean(g.hadamard(p[0], p[1])); },
       {{3, 3}, {3, 3}}},
      {"slice_rows", [](Graph& g, const std::vector<NodeId>& p) { return g.slice_rows(p[0], 1, 3); }, {{3, 3}}},
      {"slice_cols", [](Graph& g, const std::vector<NodeId>& p) { return g.slice_cols(p[0], 0, 2); }, {{3, 3}}},
      {"mse", [](Graph& g, const std::vector<NodeId>& p) { return g.mse(p[0], p[1]); }, {{3, 3}, {3, 3}}},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      worst = std::max(worst, check_op(c.build, c.shapes, 1000 * trial + 17, c.lo, c.hi));
    }
    INFO(c.name);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("two-layer network gradient passes grad_check") {
  std::mt19937_64 rng(5);
  const Tensor2 x = random_tensor(4, 3, rng);
  const Tensor2 y = random_tensor(4, 2, rng);
  ScalarFunction f = [&](const std::vector<Tensor2>& p, std::vector<Tensor2>* grads) {
    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : p) ids.push_back(g.parameter(t));
    const NodeId h = g.silu(g.add_row(g.matmul(g.constant(x), ids[0]), ids[1]));
    const NodeId out = g.add_row(g.matmul(h, ids[2]), ids[3]);
    const NodeId loss = g.mse(out, g.constant(y));
    if (grads) {
      g.backward(loss);
      grads->clear();
      for (auto id : ids) grads->push_back(g.grad(id));
    }
    return g.value(loss)[0];
  };
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Tensor2> params = {random_tensor(3, 5, rng), random_tensor(1, 5, rng), random_tensor(5, 2, rng),
                                         random_tensor(1, 2, rng)};
    CHECK(grad_check(f, params, 1e-5).max_relative_error <= 1e-4);
  }
}

TEST_CASE("grad_check is exact for affine and quadratic functions") {
  const Tensor2 a = Tensor2::from_rows({{0.3, -1.2, 2.0}});
  ScalarFunction linear = [&](const std::vector<Tensor2>& p, std::vector<Tensor2>* grads) {
    double v = 1.5;
    for (std::size_t i = 0; i < 3; ++i) v += a[i] * p[0][i];
    if (grads) *grads = {a};
    return v;
  };
  ScalarFunction quadratic = [](const std::vector<Tensor2>& p, std::vector<Tensor2>* grads) {
    double v = 0.0;
    Tensor2 g(1, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      v += (i + 1.0) * p[0][i] * p[0][i];
      g[i] = 2.0 * (i + 1.0) * p[0][i];
    }
    if (grads) *grads = {g};
    return v;
  };
  const std::vector<Tensor2> at = {Tensor2::from_rows({{0.5, -0.25, 2.0}})};
  CHECK(grad_check(linear, at, 1e-4).max_relative_error <= 1e-10);
  CHECK(grad_check(quadratic, at, 1e-4).max_relative_error <= 1e-10);
}

TEST_CASE("grad_check rejects bad steps and non-finite probes") {
  ScalarFunction f = [](const std::vector<Tensor2>& p, std::vector<Tensor2>* grads) {
    if (grads) *grads = {Tensor2(1, 1, 1.0)};
    return p[0][0] > 0.0 ? std::log(p[0][0] - 1e-9) : NAN;
  };
  const std::vector<Tensor2> at = {Tensor2::from_rows({{0.0}})};
  CHECK_THROWS_AS(grad_check(f, at, 1e-2), DomainError);
  CHECK_THROWS_AS(grad_check(f, at, 1e-5), NumericError);
}

TEST_CASE("graph evaluation is deterministic") {
  auto run = [] {
    Rng rng(derive_seed(9, 1));
    Graph g;
    const NodeId a = g.parameter(xavier_uniform(4, 4, rng));
    const NodeId b = g.parameter(xavier_uniform(4, 4, rng));
    const NodeId f = g.sum(g.softmax_rows(g.silu(g.matmul(a, b))));
    g.backward(f);
    return std::make_pair(g.value(f), g.grad(a));
  };
  const auto x = run();
  const auto y = run();
  CHECK(x.first == y.first);
  CHECK(x.second == y.second);
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
  std::vector<Tensor2> params = {Tensor2::from_rows({{1.0, -2.0}})};
  Adam adam({0.1, 0.9, 0.999, 1e-8}, params);
  const std::vector<Tensor2> grads = {Tensor2(1, 2, 0.0)};
  for (int i = 0; i < 5; ++i) adam.step(params, grads);
  CHECK(params[0] == Tensor2::from_rows({{1.0, -2.0}}));
  CHECK(adam.steps() == 5);
}

TEST_CASE("adam: first step moves by lr * sign(g)") {
  std::vector<Tensor2> params = {Tensor2::from_rows({{0.0, 0.0, 0.0}})};
  Adam adam({0.01, 0.9, 0.999, 1e-8}, params);
  adam.step(params, std::vector<Tensor2>{Tensor2::from_rows({{3.0, -0.02, 1e3}})});
  CHECK(params[0][0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(params[0][1] == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(params[0][2] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: 100 steps on w^2 match an independent scalar implementation") {
  std::vector<Tensor2> params = {Tensor2::from_rows({{1.0}})};
  Adam adam({0.1, 0.9, 0.999, 1e-8}, params);
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    adam.step(params, std::vector<Tensor2>{Tensor2::from_rows({{2.0 * params[0][0]}})});
    const double g = 2.0 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(std::abs(params[0][0]) < 0.1);
  CHECK(std::abs(params[0][0] - w) < 1e-12);
  CHECK(adam.first_moments()[0].same_shape(params[0]));
}

TEST_CASE("adam: shape mismatch") {
  std::vector<Tensor2> params = {Tensor2(1, 2)};
  Adam adam({}, params);
  CHECK_THROWS_AS(adam.step(params, std::vector<Tensor2>{Tensor2(2, 1)}), DimensionError);
}
