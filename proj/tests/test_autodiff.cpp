#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "eve/graph.hpp"
#include "eve/optim.hpp"
#include "eve/rng.hpp"

using namespace eve;

namespace {


Tensor mat(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> vals;
  std::size_t nc = 0;
  for (const auto& r : rows) {
    nc = r.size();
    vals.insert(vals.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), nc}, std::move(vals));
}

Tensor rand_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t({r, c});
  for (double& x : t.v) x = scale * rng.normal();
  return t;
}

// Central finite differences of a scalar-valued rebuildable graph w.r.t. one
// named parameter, compared entry by entry against reverse-mode.
void check_grad(const std::function<double(const std::map<std::string, Tensor>&)>& f,
                std::map<std::string, Tensor> params, const GradMap& grads, double h = 1e-5,
                double tol = 1e-4) {
  for (const auto& [name, p] : params) {
    REQUIRE(grads.count(name) == 1);
    const Tensor& g = grads.at(name);
    REQUIRE(g.v.size() == p.v.size());
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      auto plus = params, minus = params;
      plus[name].v[i] += h;
      minus[name].v[i] -= h;
      const double fd = (f(plus) - f(minus)) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(fd), std::abs(g.v[i])});
      CHECK(std::abs(g.v[i] - fd) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise and broadcast ops match finite differences") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    std::map<std::string, Tensor> params = {{"a", rand_tensor(3, 4, rng)},
                                            {"b", rand_tensor(3, 4, rng)},
                                            {"bias", rand_tensor(1, 4, rng)}};
    const Tensor c = rand_tensor(3, 4, rng);
    auto f = [&](const std::map<std::string, Tensor>& p) {
      Graph g;
      NodeId a = g.param("a", p.at("a"));
      NodeId b = g.param("b", p.at("b"));
      NodeId bias = g.param("bias", p.at("bias"));
      NodeId x = g.mul(g.add(a, b), g.sub(a, b));
      x = g.add_rowvec(x, bias);
      x = g.tanh_op(g.scale(x, 0.3));
      x = g.add(x, g.hinge(g.cmul(a, c)));
      x = g.add_const(g.exp_op(g.scale(x, 0.2)), 0.5);
      return g.values(g.mean_all(x))[0];
    };
    Graph g;
    NodeId a = g.param("a", params.at("a"));
    NodeId b = g.param("b", params.at("b"));
    NodeId bias = g.param("bias", params.at("bias"));
    NodeId x = g.mul(g.add(a, b), g.sub(a, b));
    x = g.add_rowvec(x, bias);
    x = g.tanh_op(g.scale(x, 0.3));
    x = g.add(x, g.hinge(g.cmul(a, c)));
    x = g.add_const(g.exp_op(g.scale(x, 0.2)), 0.5);
    auto grads = g.backward(g.mean_all(x));
    check_grad(f, params, grads);
  }
}

TEST_CASE("matmul, transposed matmul and concat match finite differences") {
  Rng rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    std::map<std::string, Tensor> params = {{"w1", rand_tensor(4, 3, rng)},
                                            {"w2", rand_tensor(5, 3, rng)},
                                            {"x", rand_tensor(2, 4, rng)}};
    auto build = [&](Graph& g, const std::map<std::string, Tensor>& p) {
      NodeId x = g.param("x", p.at("x"));
      NodeId w1 = g.param("w1", p.at("w1"));
      NodeId w2 = g.param("w2", p.at("w2"));
      NodeId h = g.matmul(x, w1);           // [2,3]
      NodeId out = g.matmul_nt(h, w2);      // [2,5]
      NodeId cat = g.concat_cols({h, out});  // [2,8]
      return g.sum_all(g.tanh_op(cat));
    };
    auto f = [&](const std::map<std::string, Tensor>& p) {
      Graph g;
      return g.values(build(g, p))[0];
    };
    Graph g;
    auto grads = g.backward(build(g, params));
    check_grad(f, params, grads);
  }
}

TEST_CASE("softmax cross-entropy matches finite differences and mean_rows reduces columns") {
  Rng rng(47);
  const std::vector<int> targets = {2, 0, 4};
  for (int trial = 0; trial < 5; ++trial) {
    std::map<std::string, Tensor> params = {{"logits", rand_tensor(3, 5, rng, 2.0)}};
    auto f = [&](const std::map<std::string, Tensor>& p) {
      Graph g;
      return g.values(g.softmax_xent(g.param("logits", p.at("logits")), targets))[0];
    };
    Graph g;
    auto grads = g.backward(g.softmax_xent(g.param("logits", params.at("logits")), targets));
    check_grad(f, params, grads);
  }

  Graph g;
  NodeId a = g.param("a", mat({{1.0, 2.0}, {3.0, 6.0}}));
  NodeId m = g.mean_rows(a);
  CHECK(g.values(m)[0] == doctest::Approx(2.0));
  CHECK(g.values(m)[1] == doctest::Approx(4.0));
  auto grads = g.backward(g.sum_all(m));
  for (double v : grads.at("a").v) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("softmax_of rows lie on the simplex") {
  Graph g;
  NodeId logits = g.input(mat({{1.0, 2.0, 3.0}, {-5.0, 0.0, 5.0}}));
  const Tensor p = g.softmax_of(logits);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(p.at(r, c) > 0.0);
      s += p.at(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward contract violations") {
  Graph g;
  NodeId a = g.param("a", mat({{1.0, 2.0}}));
  CHECK_THROWS_AS((void)g.backward(a), ContractViolation);  // not a scalar

  Graph g2;
  NodeId b = g2.param("b", mat({{1e308, 1e308}}));
  NodeId bad = g2.sum_all(g2.mul(b, b));  // overflows to inf
  CHECK_THROWS_AS((void)g2.backward(bad), NumericError);
}

TEST_CASE("frozen and input leaves never receive gradients") {
  Graph g;
  NodeId x = g.input(mat({{1.0, 2.0}}));
  NodeId e = g.frozen("__embed__", mat({{0.5, 0.5}}));
  NodeId w = g.param("w", mat({{2.0, 3.0}}));
  auto grads = g.backward(g.sum_all(g.mul(g.add(x, e), w)));
  CHECK(grads.size() == 1);
  CHECK(grads.count("w") == 1);
}

TEST_CASE("global norm clipping rescales to the threshold") {
  GradMap grads = {{"a", mat({{3.0, 0.0}})}, {"b", mat({{0.0, 4.0}})}};
  CHECK(global_norm(grads) == doctest::Approx(5.0));
  auto clipped = clip_global_norm(grads, 1.0);
  CHECK(global_norm(clipped) == doctest::Approx(1.0));
  CHECK(clipped.at("a").v[0] == doctest::Approx(0.6));
  // below the threshold: untouched
  auto same = clip_global_norm(grads, 10.0);
  CHECK(same.at("b").v[1] == doctest::Approx(4.0));

  GradMap bad = {{"p", mat({{std::nan("")}})}};
  CHECK_THROWS_WITH_AS(clip_global_norm(bad, 1.0), doctest::Contains("p"), NumericError);
}

TEST_CASE("optimizer: decoupled decay shrinks weights under zero gradients") {
  OptimConfig oc;
  oc.lr = 0.1;
  oc.weight_decay = 0.5;
  Optimizer opt(oc);
  ParamMap params = {{"w", mat({{2.0}})}};
  GradMap zero = {{"w", Tensor({1, 1})}};
  opt.step(params, zero);
  CHECK(params.at("w").v[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("optimizer: first step moves opposite the gradient by about lr") {
  OptimConfig oc;
  oc.lr = 0.01;
  oc.weight_decay = 0.0;
  Optimizer opt(oc);
  ParamMap params = {{"w", mat({{1.0}})}};
  GradMap grads = {{"w", mat({{2.5}})}};
  opt.step(params, grads);
  // bias-corrected adaptive step of a fresh optimizer is ~lr * sign(grad)
  CHECK(params.at("w").v[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-3));
}
