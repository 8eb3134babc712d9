#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iarn/numerics/finite_difference.hpp"
#include "iarn/numerics/tape.hpp"
#include "iarn/numerics/tensor.hpp"

using namespace iarn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

TEST(Matvec, IdentityZeroAndHandArithmetic) {
  EXPECT_EQ(matvec(Tensor::identity(3), Tensor::from({1, 2, 3})), Tensor::from({1, 2, 3}));
  EXPECT_EQ(matvec(Tensor::matrix(2, 2), Tensor::from({5, 7})), Tensor::from({0, 0}));
  EXPECT_EQ(matvec(Tensor::from({{1, 2}, {3, 4}}), Tensor::from({1, 1})), Tensor::from({3, 7}));
}

TEST(Matvec, DimensionMismatchNamesBothShapes) {
  try {
    matvec(Tensor::matrix(2, 3), Tensor::vector(2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
}

TEST(Activate, Definitions) {
  EXPECT_EQ(activate(Tensor::from({-1.0}), Activation::relu())[0], 0.0);
  EXPECT_EQ(activate(Tensor::from({-2.0}), Activation::prelu(0.25))[0], -0.5);
  EXPECT_EQ(activate(Tensor::from({0.0}), Activation::sigmoid())[0], 0.5);
  EXPECT_EQ(activate(Tensor::from({3.0}), Activation::relu())[0], 3.0);
}

TEST(Activate, PreservesShapeAndRanges) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> wide(-80.0, 80.0);
  Tensor x = Tensor::matrix(4, 7);
  for (auto& v : x.data()) v = wide(rng);
  x[0] = 1000.0;
  x[1] = -1000.0;
  const Tensor s = activate(x, Activation::sigmoid());
  const Tensor t = activate(x, Activation::tanh());
  EXPECT_EQ(s.shape(), x.shape());
  EXPECT_EQ(t.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GT(s[i], 0.0);
    EXPECT_LT(s[i], 1.0);
    EXPECT_GE(t[i], -1.0);
    EXPECT_LE(t[i], 1.0);
  }
  EXPECT_THROW(activate(x, Activation::prelu(std::nan(""))), ContractError);
}

TEST(Backward, SquareAtThree) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::from({3.0}));
  Tape tape(ps);
  const Var v = tape.parameter(x);
  const Gradients g = tape.backward(tape.mul(v, v));
  EXPECT_DOUBLE_EQ(g.dense(x)[0], 6.0);
}

TEST(Backward, ConstantLossHasZeroGradients) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::from({3.0, 1.0}));
  Tape tape(ps);
  tape.parameter(x);
  const Var c = tape.dot(tape.constant(Tensor::from({1.0, 2.0})), tape.constant(Tensor::from({3.0, 4.0})));
  const Gradients g = tape.backward(c);
  EXPECT_FALSE(g.touched(x.index));
  EXPECT_EQ(g.dense(x), Tensor::vector(2));
}

TEST(Backward, NonScalarLossIsContractError) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::from({1.0, 2.0}));
  Tape tape(ps);
  EXPECT_THROW(tape.backward(tape.parameter(x)), ContractError);
}

TEST(Backward, RandomCompositeMatchesCentralDifferences) {
  // loss = sigmoid(a) * tanh(b) + prelu(c * a; slope 0.3)^2 with three scalar parameters.
  ParameterStore ps;
  const auto a = ps.add("a", Tensor::from({0.37}));
  const auto b = ps.add("b", Tensor::from({-0.81}));
  const auto c = ps.add("c", Tensor::from({0.55}));
  const auto build = [&](Tape& tape) {
    const Var va = tape.parameter(a), vb = tape.parameter(b), vc = tape.parameter(c);
    const Var left = tape.mul(tape.sigmoid(va), tape.tanh(vb));
    const Var p = tape.prelu(tape.mul(vc, va), tape.constant(Tensor::from({0.3})));
    return tape.add(left, tape.mul(p, p));
  };
  Tape tape(ps);
  const Gradients analytic = tape.backward(build(tape));
  const Gradients numeric = finite_difference(
      [&](const ParameterStore& p) {
        Tape t(p);
        return t.scalar(build(t));
      },
      ps, 1e-5);
  for (auto id : {a, b, c}) {
    const double x = analytic.dense(id)[0], y = numeric.dense(id)[0];
    EXPECT_LT(std::abs(x - y) / std::max(std::abs(x), std::abs(y)), 1e-6) << ps.name(id.index);
  }
}

TEST(FiniteDifference, ScalarExamples) {
  EXPECT_NEAR(finite_difference([](double x) { return x * x; }, 3.0, 1e-5), 6.0, 1e-8);
  EXPECT_EQ(finite_difference([](double) { return 4.2; }, 1.0, 1e-5), 0.0);
  EXPECT_NEAR(finite_difference([](double x) { return sigmoid(x); }, 0.0, 1e-5), 0.25, 1e-9);
  EXPECT_THROW(finite_difference([](double x) { return x; }, 0.0, 0.0), ContractError);
}

// Every differentiable primitive against central differences on random inputs in [-1, 1].
TEST(Backward, EveryKernelMatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  ParameterStore ps;
  const auto A = ps.add("A", random_tensor({3, 4}, rng));
  const auto x = ps.add("x", random_tensor({4}, rng));
  const auto y = ps.add("y", random_tensor({3}, rng));
  const auto z = ps.add("z", random_tensor({3}, rng));
  const auto g = ps.add("g", Tensor::from({0.4}));
  const auto alpha = ps.add("alpha", Tensor::from({0.2}));
  const auto E = ps.add("E", random_tensor({5, 3}, rng));
  const auto w = ps.add("w", random_tensor({13}, rng));
  const Tensor mask = Tensor::from({2.0, 0.0, 2.0});

  const auto build = [&](Tape& t) {
    const Var ax = t.matvec(t.parameter(A), t.parameter(x));
    const Var r = t.relu(t.add(ax, t.parameter(y)));
    const Var s = t.sigmoid(t.sub(ax, t.parameter(z)));
    const Var h = t.tanh(t.mul(t.parameter(y), t.parameter(z)));
    const Var b = t.blend(r, h, t.parameter(g));
    const Var p = t.prelu(t.add(ax, t.row(E, 2), t.parameter(z)), t.parameter(alpha));
    const Var m = t.mask(s, mask);
    const Var af = t.tanh(t.affine(t.parameter(A), t.parameter(x), t.parameter(A), t.relu(t.parameter(x)), t.parameter(z)));
    const Var cat = t.concat({b, p, t.sum({m, s, t.row(E, 4)}), t.dot(b, p), t.affine(t.parameter(A), t.parameter(x), af)});
    return t.squared_error(t.dot(cat, t.parameter(w)), 0.3);
  };
  Tape tape(ps);
  const Gradients analytic = tape.backward(build(tape));
  const Gradients numeric = finite_difference(
      [&](const ParameterStore& p) {
        Tape t(p);
        return t.scalar(build(t));
      },
      ps, 1e-5);
  const auto cmp = compare_gradients(analytic, numeric);
  EXPECT_LT(cmp.max_relative_error, 1e-4) << "worst: " << ps.name(cmp.worst_parameter) << "[" << cmp.worst_index << "]";
}

TEST(Tape, BackwardIsIdempotentAndDeterministic) {
  std::mt19937_64 rng(5);
  ParameterStore ps;
  const auto A = ps.add("A", random_tensor({6, 6}, rng));
  const auto x = ps.add("x", random_tensor({6}, rng));
  auto run = [&]() {
    Tape t(ps);
    Var v = t.parameter(x);
    for (int i = 0; i < 4; ++i) v = t.tanh(t.matvec(t.parameter(A), v));
    const Var loss = t.dot(v, v);
    Gradients first = t.backward(loss);
    Gradients second = t.backward(loss);
    EXPECT_EQ(first, second);
    return std::make_pair(t.scalar(loss), first);
  };
  const auto r1 = run();
  const auto r2 = run();
  EXPECT_EQ(r1.first, r2.first);
  EXPECT_EQ(r1.second, r2.second);
}

TEST(Tape, AccumulatorsMirrorParameterShapes) {
  ParameterStore ps;
  const auto A = ps.add("A", Tensor::matrix(2, 3, 0.5));
  const auto b = ps.add("b", Tensor::vector(2, 0.1));
  Tape t(ps);
  const Var out = t.add(t.matvec(t.parameter(A), t.constant(Tensor::from({1, 2, 3}))), t.parameter(b));
  Gradients g = t.backward(t.dot(out, out));
  EXPECT_EQ(g.slot(A).shape(), ps[A].shape());
  EXPECT_EQ(g.slot(b).shape(), ps[b].shape());
}
