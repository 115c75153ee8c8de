#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedsvm/error.hpp"
#include "fedsvm/finite_difference.hpp"
#include "fedsvm/optimizer.hpp"
#include "fedsvm/tensor.hpp"

using namespace fedsvm;

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor(Shape{0, 3}), ShapeError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  t.at(1, 2) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(t += Tensor(Shape{3, 2}), ShapeError);
}

TEST(Tensor, FinitenessIsEnforced) {
  auto t = Tensor::vector({1.0, NAN});
  EXPECT_THROW(require_finite(t, "t"), NumericError);
  EXPECT_THROW(require_finite(INFINITY, "x"), NumericError);
}

TEST(Sgd, DefinitionExamples) {
  auto s = OptimizerState::sgd(0.2);
  auto out = sgd_step(Tensor::vector({1.0}), Tensor::vector({0.5}), s);
  EXPECT_DOUBLE_EQ(out[0], 0.9);
  EXPECT_EQ(s.step_count, 1u);

  auto zero = sgd_step(Tensor::vector({1.0, -3.0}), Tensor::vector({0.0, 0.0}), s);
  EXPECT_EQ(zero, Tensor::vector({1.0, -3.0}));

  auto unit = OptimizerState::sgd(1.0);
  EXPECT_EQ(sgd_step(Tensor::vector({1, 2}), Tensor::vector({1, 1}), unit),
            Tensor::vector({0, 1}));
  EXPECT_TRUE(s.first_moment.empty());
}

TEST(Sgd, Errors) {
  auto s = OptimizerState::sgd(0.1);
  EXPECT_THROW(sgd_step(Tensor::vector({1, 2}), Tensor::vector({1}), s), ShapeError);
  EXPECT_THROW(sgd_step(Tensor::vector({1}), Tensor::vector({NAN}), s), NumericError);
  auto adam = OptimizerState::adam(0.1);
  EXPECT_THROW(sgd_step(Tensor::vector({1}), Tensor::vector({1}), adam), Error);
}

TEST(Adam, FirstStepByHand) {
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; step = 0.1 / (1 + 1e-8).
  auto s = OptimizerState::adam(0.1);
  auto out = adam_step(Tensor::vector({0.0}), Tensor::vector({1.0}), s);
  EXPECT_NEAR(out[0], -0.1, 1e-7);
  EXPECT_NEAR(s.first_moment[0], 0.1, 1e-15);
  EXPECT_NEAR(s.second_moment[0], 0.001, 1e-15);
  EXPECT_EQ(s.step_count, 1u);
}

TEST(Adam, AmsGradFirstStepMatchesAdam) {
  auto a = OptimizerState::adam(0.05);
  auto b = OptimizerState::amsgrad(0.05);
  const auto p = Tensor::vector({0.3, -1.2, 2.0});
  const auto g = Tensor::vector({0.7, -0.1, 3.0});
  EXPECT_EQ(adam_step(p, g, a), adam_step(p, g, b));
}

TEST(Adam, ZeroGradientLeavesParamsAtFirstStep) {
  auto s = OptimizerState::adam(0.1);
  const auto p = Tensor::vector({0.5, -0.5});
  EXPECT_EQ(adam_step(p, Tensor::vector({0, 0}), s), p);
}

TEST(Adam, AmsGradMomentDominatesAdam) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  auto adam = OptimizerState::adam(0.01);
  auto ams = OptimizerState::amsgrad(0.01);
  Tensor pa = Tensor::vector({0, 0, 0, 0});
  Tensor pb = pa;
  Tensor prev_max;
  for (int step = 1; step <= 200; ++step) {
    // Decaying gradient scale makes v_hat shrink so the running max matters.
    const double scale = step < 50 ? 5.0 : 0.1;
    Tensor grad = Tensor::vector({scale * g(rng), scale * g(rng), g(rng), 0.0});
    pa = adam_step(pa, grad, adam);
    pb = adam_step(pb, grad, ams);
    const double bc2 = 1.0 - std::pow(0.999, step);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(ams.max_second_moment[i], adam.second_moment[i] / bc2 - 1e-15);
      if (!prev_max.empty()) EXPECT_GE(ams.max_second_moment[i], prev_max[i]);
    }
    prev_max = ams.max_second_moment;
  }
  EXPECT_EQ(adam.step_count, 200u);
}

TEST(Adam, ResetClearsMoments) {
  auto s = OptimizerState::amsgrad(0.1);
  adam_step(Tensor::vector({1}), Tensor::vector({1}), s);
  s.reset();
  EXPECT_EQ(s.step_count, 0u);
  EXPECT_TRUE(s.first_moment.empty());
  // Different shape is accepted after reset.
  EXPECT_NO_THROW(adam_step(Tensor::vector({1, 2}), Tensor::vector({1, 1}), s));
}

TEST(FiniteDifference, AnalyticExamples) {
  auto sq = [](const Tensor& x) { return x[0] * x[0]; };
  EXPECT_NEAR(finite_difference_gradient(sq, Tensor::vector({3.0}))[0], 6.0, 1e-6);

  auto constant = [](const Tensor&) { return 4.2; };
  EXPECT_EQ(finite_difference_gradient(constant, Tensor::vector({1, 2, 3})),
            Tensor::vector({0, 0, 0}));

  auto norm2 = [](const Tensor& x) { return squared_norm(x.values()); };
  const auto g = finite_difference_gradient(norm2, Tensor::vector({1, 2}));
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
}

TEST(FiniteDifference, RejectsNonFiniteFunction) {
  auto bad = [](const Tensor& x) { return std::log(x[0]); };
  EXPECT_THROW(finite_difference_gradient(bad, Tensor::vector({0.0})), NumericError);
  EXPECT_THROW(finite_difference_gradient(bad, Tensor::vector({1.0}), 0.0), Error);
}
