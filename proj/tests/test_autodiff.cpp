#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "touchsdf/autodiff.hpp"
#include "touchsdf/checkpoint.hpp"
#include "touchsdf/rng.hpp"

using namespace touchsdf;
using namespace touchsdf::ad;

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double s = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, s);
  return t;
}

}  // namespace

TEST(Forward, MatmulOfOnes) {
  Graph<double> g;
  const Var a = g.constant(Tensor<double>({2, 3}, 1.0));
  const Var b = g.constant(Tensor<double>({3, 1}, 1.0));
  const Var c = g.matmul(a, b);
  EXPECT_EQ(g.value(c).shape, (Shape{2, 1}));
  EXPECT_EQ(g.value(c).data, (std::vector<double>{3, 3}));
}

TEST(Forward, ReluClampTanhSinCos) {
  Graph<double> g;
  const Var x = g.constant(Tensor<double>({3}, {-1, 0, 2}));
  EXPECT_EQ(g.value(g.relu(x)).data, (std::vector<double>{0, 0, 2}));
  const double d = 0.1;
  const Var y = g.constant(Tensor<double>({1}, {2 * d}));
  EXPECT_EQ(g.value(g.clamp(y, -d, d)).item(), d);
  EXPECT_NEAR(g.value(g.tanh(x)).data[2], std::tanh(2.0), 1e-15);
  EXPECT_NEAR(g.value(g.sin(x)).data[0], std::sin(-1.0), 1e-15);
  EXPECT_NEAR(g.value(g.cos(x)).data[2], std::cos(2.0), 1e-15);
}

TEST(Forward, InputsAreFedByNameAndShapeChecked) {
  Graph<double> g;
  const Var x = g.input("x", {2, 2});
  const Var w = g.constant(Tensor<double>({2, 1}, {1, 2}));
  g.set_output("y", g.matmul(x, w));
  auto out = g.forward({{"x", Tensor<double>({2, 2}, {1, 1, 3, 4})}});
  EXPECT_EQ(out.at("y").data, (std::vector<double>{3, 11}));
  EXPECT_THROW(g.forward({{"x", Tensor<double>({3, 2})}}), ShapeMismatch);
  EXPECT_THROW(g.forward({{"nope", Tensor<double>({2, 2})}}), ShapeMismatch);
  EXPECT_THROW(g.matmul(w, w), ShapeMismatch);
}

TEST(Forward, DoesNotMutateParameters) {
  Tensor<double> w({2, 2}, {1, 2, 3, 4});
  const auto before = w.data;
  Graph<double> g;
  const Var p = g.parameter(&w);
  const Var loss = g.sq_norm(p);
  g.forward();
  g.backward(loss);
  EXPECT_EQ(w.data, before);
}

TEST(Backward, SquareViaMultiply) {
  Graph<double> g;
  const Var x = g.variable(Tensor<double>::scalar(3.0), true);
  const Var y = g.mul(x, x);
  g.backward(y);
  EXPECT_EQ(g.grad(x).item(), 6.0);
}

TEST(Backward, L1SubgradientConvention) {
  Graph<double> g;
  const Var x = g.variable(Tensor<double>({4}, {0.5, 2.0, 0.0, -1.0}), true);
  const Var zero = g.constant(Tensor<double>({4}, 0.0));
  g.backward(g.l1_loss(x, zero));
  EXPECT_EQ(g.grad(x).data, (std::vector<double>{0.25, 0.25, 0.0, -0.25}));
}

TEST(Backward, ReluAndClampBoundaryGradientsAreZero) {
  Graph<double> g;
  const Var x = g.variable(Tensor<double>({3}, {0.0, 0.1, 0.5}), true);
  g.backward(g.sum(g.relu(x)));
  EXPECT_EQ(g.grad(x).data, (std::vector<double>{0, 1, 1}));

  Graph<double> h;
  const Var y = h.variable(Tensor<double>({4}, {-0.1, 0.05, 0.1, 0.3}), true);
  h.backward(h.sum(h.clamp(y, -0.1, 0.1)));
  EXPECT_EQ(h.grad(y).data, (std::vector<double>{0, 1, 0, 0}));
}

TEST(Backward, NonScalarThrowsAndUnreachedIsZero) {
  Graph<double> g;
  const Var x = g.variable(Tensor<double>({2}, {1, 2}), true);
  const Var unused = g.variable(Tensor<double>({2}, {1, 2}), true);
  EXPECT_THROW(g.backward(x), NotScalar);
  g.backward(g.sum(x));
  EXPECT_EQ(g.grad(unused).data, (std::vector<double>{0, 0}));
  EXPECT_THROW(Tensor<double>({2}).item(), NotScalar);
}

TEST(Backward, RandomMlpMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor<double> w1 = randn({5, 16}, rng, 0.5), b1 = randn({16}, rng, 0.1);
  Tensor<double> w2 = randn({16, 16}, rng, 0.3), b2 = randn({16}, rng, 0.1);
  Tensor<double> w3 = randn({16, 1}, rng, 0.3), b3 = randn({1}, rng, 0.1);
  Graph<double> g;
  const Var x = g.input("x", {8, 5});
  Var h = g.relu(g.add(g.matmul(x, g.parameter(&w1)), g.parameter(&b1)));
  h = g.tanh(g.add(g.matmul(h, g.parameter(&w2)), g.parameter(&b2)));
  const Var y = g.add(g.matmul(h, g.parameter(&w3)), g.parameter(&b3));
  const Var loss = g.mean(g.mul(y, y));
  const auto r = check_gradients(g, loss, {{"x", randn({8, 5}, rng)}});
  EXPECT_GT(r.checked, 300u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Backward, SmoothGraphIsPrecise) {
  Rng rng(12);
  Tensor<double> w = randn({3, 4}, rng), v = randn({3, 4}, rng);
  Graph<double> g;
  const Var a = g.parameter(&w);
  const Var b = g.parameter(&v);
  const Var e = g.concat(g.sin(a), g.mul(g.cos(b), g.tanh(a)));
  const Var loss = g.add(g.sq_norm(g.scale(e, 0.7)), g.sum(g.sub(a, b)));
  const auto r = check_gradients(g, loss, {});
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_EQ(r.checked, 24u);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, ClampInFlatRegionHasZeroGradient) {
  Tensor<double> w({3}, {0.5, -0.7, 0.9});
  Graph<double> g;
  const Var p = g.parameter(&w);
  const Var loss = g.sum(g.clamp(p, -0.1, 0.1));
  const auto r = check_gradients(g, loss, {});
  EXPECT_EQ(r.checked, 3u);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(g.grad(p).data, (std::vector<double>{0, 0, 0}));
}

TEST(Backward, KinkAdjacentCoordinatesAreSkipped) {
  Tensor<double> w({3}, {1e-7, 0.5, -0.5});
  Graph<double> g;
  const Var loss = g.sum(g.relu(g.parameter(&w)));
  const auto r = check_gradients(g, loss, {});
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.checked, 2u);
}

TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
  Rng rng(13);
  auto fresh = [&](Shape s) { return randn(std::move(s), rng, 0.8); };
  using Builder = std::function<Var(Graph<double>&, Var, Var)>;
  const std::vector<std::pair<std::string, Builder>> cases = {
      {"matmul", [](Graph<double>& g, Var a, Var b) { return g.matmul(a, g.scale(b, 1.0)); }},
      {"add", [](Graph<double>& g, Var a, Var b) { return g.add(a, g.gather(b, {0})); }},
      {"sub", [](Graph<double>& g, Var a, Var b) { return g.sub(a, g.gather(b, {1})); }},
      {"mul", [](Graph<double>& g, Var a, Var) { return g.mul(a, g.sin(a)); }},
      {"relu", [](Graph<double>& g, Var a, Var) { return g.relu(a); }},
      {"tanh", [](Graph<double>& g, Var a, Var) { return g.tanh(a); }},
      {"sin", [](Graph<double>& g, Var a, Var) { return g.sin(a); }},
      {"cos", [](Graph<double>& g, Var a, Var) { return g.cos(a); }},
      {"clamp", [](Graph<double>& g, Var a, Var) { return g.clamp(a, -0.5, 0.5); }},
      {"concat", [](Graph<double>& g, Var a, Var b) { return g.concat(a, g.gather(b, {2, 0, 1})); }},
      {"gather", [](Graph<double>& g, Var, Var b) { return g.gather(b, {1, 1, 3}); }},
      {"l1", [](Graph<double>& g, Var a, Var b) { return g.l1_loss(a, g.gather(b, {0, 1, 2})); }},
      {"sq_norm", [](Graph<double>& g, Var a, Var) { return g.sq_norm(a); }},
      {"mean", [](Graph<double>& g, Var a, Var) { return g.mean(a); }},
  };
  for (const auto& [name, build] : cases) {
    Tensor<double> a = fresh({3, 4}), b = fresh({4, 4});
    Graph<double> g;
    const Var out = build(g, g.parameter(&a), g.parameter(&b));
    // random projection to a scalar so every output element contributes
    Tensor<double> weights = fresh(g.value(out).shape);
    const Var loss = g.sum(g.mul(out, g.constant(weights)));
    const auto r = check_gradients(g, loss, {});
    EXPECT_GT(r.checked, 0u) << name;
    EXPECT_LT(r.max_rel_error, 1e-5) << name;
  }
}

TEST(Backward, CorruptedCustomRuleIsDetected) {
  Rng rng(14);
  Tensor<double> w = randn({6}, rng);
  CustomOp<double> cube;
  cube.name = "cube";
  cube.forward = [](const CustomOp<double>::Inputs& in) {
    Tensor<double> out(in[0]->shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow((*in[0])[i], 3);
    return out;
  };
  auto make_vjp = [](double factor) {
    return [factor](const CustomOp<double>::Inputs& in, const Tensor<double>&, const Tensor<double>& g) {
      Tensor<double> d(in[0]->shape);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = factor * (*in[0])[i] * (*in[0])[i] * g[i];
      return std::vector<Tensor<double>>{d};
    };
  };
  {
    cube.vjp = make_vjp(3.0);
    Graph<double> g;
    const Var loss = g.sum(g.custom({g.parameter(&w)}, cube));
    EXPECT_LT(check_gradients(g, loss, {}).max_rel_error, 1e-6);
  }
  {
    cube.vjp = make_vjp(2.0);
    Graph<double> g;
    const Var loss = g.sum(g.custom({g.parameter(&w)}, cube));
    EXPECT_GT(check_gradients(g, loss, {}).max_rel_error, 1e-2);
  }
}

TEST(Backward, GradientIsLinear) {
  Rng rng(15);
  Tensor<double> w = randn({4, 3}, rng);
  auto grad_of = [&](double a, double b) {
    Graph<double> g;
    const Var p = g.parameter(&w);
    const Var f = g.sq_norm(g.tanh(p));
    const Var h = g.sum(g.sin(g.mul(p, p)));
    g.backward(g.add(g.scale(f, a), g.scale(h, b)));
    return g.grad(p).data;
  };
  const auto gf = grad_of(1.0, 0.0);
  const auto gh = grad_of(0.0, 1.0);
  const auto mix = grad_of(2.5, -1.5);
  for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(mix[i], 2.5 * gf[i] - 1.5 * gh[i], 1e-12);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    Rng rng(16);
    Tensor<float> w({32, 8});
    for (auto& v : w.data) v = static_cast<float>(rng.normal());
    Tensor<float> x({64, 32});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    Graph<float> g;
    const Var p = g.parameter(&w);
    const Var loss = g.mean(g.relu(g.matmul(g.constant(x), p)));
    g.backward(loss);
    return std::make_pair(g.value(loss).data, g.grad(p).data);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor<double> w({3}, {1, 2, 3});
  const Tensor<double> g({3}, 0.0);
  AdamState<double> s;
  for (int i = 0; i < 5; ++i) adam_step<double>({&w}, {&g}, s);
  EXPECT_EQ(w.data, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(s.step, 5u);
}

TEST(Adam, FirstStepIsSignScaledByLr) {
  Tensor<double> w({3}, {0, 0, 0});
  const Tensor<double> g({3}, {0.3, -2.0, 1e-3});
  AdamState<double> s;
  s.hyper.lr = 0.01;
  adam_step<double>({&w}, {&g}, s);
  EXPECT_NEAR(w[0], -0.01, 1e-8);
  EXPECT_NEAR(w[1], 0.01, 1e-8);
  EXPECT_NEAR(w[2], -0.01, 1e-6);
}

TEST(Adam, ConvergesOnQuadratic) {
  const Tensor<double> c({4}, {0.5, -1.0, 2.0, 0.25});
  Tensor<double> w({4}, 0.0);
  AdamState<double> s;
  s.hyper.lr = 0.1;
  for (int it = 0; it < 200; ++it) {
    Graph<double> g;
    const Var p = g.parameter(&w);
    const Var loss = g.sq_norm(g.sub(p, g.constant(c)));
    g.backward(loss);
    const Tensor<double> grad = g.grad(p);
    adam_step<double>({&w}, {&grad}, s);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], c[i], 1e-3);
}

TEST(Adam, ShapeMismatch) {
  Tensor<double> w({3});
  const Tensor<double> g({2});
  AdamState<double> s;
  EXPECT_THROW(adam_step<double>({&w}, {&g}, s), ShapeMismatch);
}

TEST(Checkpoint, RoundTrip) {
  ParameterSet<float> params;
  params.add("layer0.w", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  params.add("z", Tensor<float>({5}, 0.25f));
  std::stringstream ss;
  write_parameters(ss, params);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "TPRM");
  // magic, version, count; name(4+8) rank dims data; name(4+1) rank dims data
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + (4 + 8 + 4 + 16 + 24) + (4 + 1 + 4 + 8 + 20u));
  const auto back = read_parameters(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.get("layer0.w").shape, (Shape{2, 3}));
  EXPECT_EQ(back.get("layer0.w").data, params.get("layer0.w").data);
  EXPECT_EQ(back.entries()[1].first, "z");
  std::istringstream bad("TPRX");
  EXPECT_THROW(read_parameters(bad), ParseError);
}
