#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cgat/diffcore.hpp"
#include "cgat/hashmodel.hpp"
#include "oracles.hpp"

using cgat::diff::DenseParams;
using cgat::diff::ParamGrad;
using cgat::diff::ParamTensor;
using cgat::diff::ShapeError;
using cgat::diff::Tape;
using cgat::diff::TapeError;

namespace {

DenseParams random_layer(std::size_t in, std::size_t out, std::uint64_t seed) {
  DenseParams p(in, out);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& w : p.weights.values) w = u(rng);
  for (double& b : p.bias.values) b = u(rng);
  return p;
}

}  // namespace

TEST(ParamTensor, LengthsFollowShape) {
  ParamTensor t({3, 4});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_TRUE(t.consistent());
  t.grad.pop_back();
  EXPECT_FALSE(t.consistent());
}

TEST(Dense, IdentityWeightsPassInputThrough) {
  DenseParams p(2, 2);
  p.weights.values = {1, 0, 0, 1};
  Tape tape;
  std::vector<double> x{0.2, 0.8};
  auto y = tape.dense(tape.input(x), p);
  EXPECT_EQ(tape.value(y)[0], 0.2);
  EXPECT_EQ(tape.value(y)[1], 0.8);
}

TEST(Dense, ZeroWeightsReturnBias) {
  DenseParams p(3, 2);
  p.bias.values = {1, -1};
  Tape tape;
  std::vector<double> x{0.3, -7.0, 2.5};
  auto y = tape.dense(tape.input(x), p);
  EXPECT_EQ(tape.value(y)[0], 1.0);
  EXPECT_EQ(tape.value(y)[1], -1.0);
}

TEST(Dense, MatchesHandMultipliedProduct) {
  auto p = random_layer(2, 3, 11);
  std::vector<double> x{0.37, -1.25};
  Tape tape;
  auto y = tape.dense(tape.input(x), p);
  const auto& w = p.weights.values;
  const auto& b = p.bias.values;
  const double expect[3] = {w[0] * x[0] + w[1] * x[1] + b[0], w[2] * x[0] + w[3] * x[1] + b[1],
                            w[4] * x[0] + w[5] * x[1] + b[2]};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(tape.value(y)[i], expect[i], 1e-12);
}

TEST(Dense, WidthMismatchIsShapeError) {
  DenseParams p(3, 2);
  Tape tape;
  std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(tape.dense(tape.input(x), p), ShapeError);
  EXPECT_THROW(tape.input(x, 3, 1), ShapeError);
}

TEST(Tanh, KnownValuesAndOpenRange) {
  Tape tape;
  std::vector<double> x{0.0, 0.0, 0.5, 40.0, -40.0};
  auto y = tape.tanh(tape.input(x));
  auto v = tape.value(y);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
  EXPECT_NEAR(v[2], 0.46211715726000974, 1e-15);
  EXPECT_LE(v[3], 1.0);
  EXPECT_GE(v[4], -1.0);
  std::vector<double> y15{15.0};
  Tape t2;
  EXPECT_LT(t2.value(t2.tanh(t2.input(y15)))[0], 1.0);
}

TEST(Backward, EmptyTapeAndNonScalarLossAreErrors) {
  Tape tape;
  EXPECT_THROW(tape.backward(cgat::diff::Var{0}), TapeError);
  std::vector<double> x{1.0, 2.0};
  auto v = tape.input(x);
  EXPECT_THROW(tape.backward(v), TapeError);
}

TEST(Backward, SumOfInputsGivesOnes) {
  Tape tape;
  std::vector<double> x{0.1, -3.0, 2.0, 7.5};
  auto in = tape.input(x, 2, 2);
  tape.backward(tape.sum(in));
  for (double g : tape.grad(in)) EXPECT_EQ(g, 1.0);
}

TEST(Backward, TanhAtZeroWeightsGivesInputAsWeightGradient) {
  DenseParams p(3, 1);
  std::vector<double> x{0.25, -0.5, 2.0};
  Tape tape;
  auto loss = tape.sum(tape.tanh(tape.dense(tape.input(x), p)));
  tape.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.weights.grad[i], x[i]);
  EXPECT_DOUBLE_EQ(p.bias.grad[0], 1.0);
}

TEST(Backward, VisitsNodesInReverseRecordingOrder) {
  auto p = random_layer(2, 2, 3);
  std::vector<double> x{0.5, 0.25};
  Tape tape;
  auto loss = tape.sum(tape.square(tape.tanh(tape.dense(tape.input(x), p))));
  std::vector<std::size_t> trace;
  tape.set_trace(&trace);
  tape.backward(loss);
  ASSERT_EQ(trace.size(), tape.size());
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(trace[i], tape.size() - 1 - i);
}

TEST(Backward, RepeatedPassesGiveIdenticalGradients) {
  auto model = cgat::HashModel::create({4, 6, 3}, 5);
  std::vector<double> x{0.1, 0.9, 0.4, 0.6, 0.3, 0.2, 0.7, 0.8};
  Tape tape;
  auto in = tape.input(x, 2, 4);
  auto loss = tape.sum(tape.square(model.forward(tape, in)));
  tape.backward(loss);
  std::vector<double> first_in(tape.grad(in).begin(), tape.grad(in).end());
  std::vector<std::vector<double>> first_params;
  for (auto* p : model.params()) first_params.push_back(p->grad);
  model.zero_grad();
  tape.backward(loss);
  EXPECT_TRUE(std::equal(first_in.begin(), first_in.end(), tape.grad(in).begin()));
  auto ps = model.params();
  for (std::size_t t = 0; t < ps.size(); ++t) EXPECT_EQ(ps[t]->grad, first_params[t]);
}

TEST(Backward, FrozenTapeLeavesParameterGradientsUntouched) {
  auto model = cgat::HashModel::create({3, 4, 2}, 9);
  std::vector<double> x{0.1, 0.2, 0.3};
  Tape tape(ParamGrad::frozen);
  auto in = tape.input(x);
  tape.backward(tape.sum(model.forward(tape, in)));
  for (const auto* p : std::as_const(model).params()) {
    for (double g : p->grad) EXPECT_EQ(g, 0.0);
  }
  bool any = false;
  for (double g : tape.grad(in)) any = any || g != 0.0;
  EXPECT_TRUE(any);
}

TEST(Backward, MatmulWithItselfMatchesFiniteDifferences) {
  std::vector<double> h{0.3, -0.2, 0.5, 0.1, -0.7, 0.4};
  auto eval = [&]() {
    Tape t;
    auto v = t.input(h, 3, 2);
    return t.scalar(t.sum(t.softplus(t.matmul_nt(v, v))));
  };
  Tape tape;
  auto v = tape.input(h, 3, 2);
  tape.backward(tape.sum(tape.softplus(tape.matmul_nt(v, v))));
  auto numeric = oracle::central_difference(h, eval);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_LT(oracle::relative_error(tape.grad(v)[i], numeric[i]), 1e-8);
}

TEST(Backward, SoftplusIsStableForLargeArguments) {
  std::vector<double> x{800.0, -800.0};
  Tape tape;
  auto in = tape.input(x);
  auto y = tape.softplus(in);
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 800.0);
  EXPECT_GE(tape.value(y)[1], 0.0);
  tape.backward(tape.sum(y));
  EXPECT_DOUBLE_EQ(tape.grad(in)[0], 1.0);
  EXPECT_NEAR(tape.grad(in)[1], 0.0, 1e-300);
}

class TwoLayerGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(TwoLayerGradient, EveryPartialMatchesCentralDifferences) {
  const std::uint64_t seed = GetParam();
  auto model = cgat::HashModel::create({5, 7, 4}, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(3 * 5);
  for (double& v : x) v = u(rng);
  std::vector<double> target(3 * 4);
  for (double& v : target) v = u(rng) * 2.0 - 1.0;

  auto loss_value = [&]() {
    auto h = oracle::forward(model, x, 3);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) acc += (h[i] - target[i]) * (h[i] - target[i]);
    return acc;
  };

  model.zero_grad();
  Tape tape;
  auto in = tape.input(x, 3, 5);
  auto loss = tape.sum(tape.square(tape.sub_const(model.forward(tape, in), target)));
  EXPECT_NEAR(tape.scalar(loss), loss_value(), 1e-12);
  tape.backward(loss);

  auto gx = oracle::central_difference(x, loss_value);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(oracle::relative_error(tape.grad(in)[i], gx[i]), 1e-4);
  for (auto* p : model.params()) {
    auto numeric = oracle::central_difference(p->values, loss_value);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      EXPECT_LT(oracle::relative_error(p->grad[i], numeric[i]), 1e-4);
      EXPECT_TRUE(std::isfinite(p->grad[i]));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, TwoLayerGradient, ::testing::Values(1, 2, 3, 4, 5));
