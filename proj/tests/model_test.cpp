#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fedsvm/checkpoint.hpp"
#include "fedsvm/error.hpp"
#include "fedsvm/finite_difference.hpp"
#include "fedsvm/model.hpp"

using namespace fedsvm;

namespace {

Model single_layer(Tensor weights, Tensor logit) {
  Model m;
  const auto out = weights.rows();
  m.encoder.push_back({std::move(weights), Tensor(Shape{out})});
  m.logit_matrix = std::move(logit);
  return m;
}

Batch random_batch(std::size_t b, std::size_t p, std::size_t k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, k - 1);
  Batch batch{Tensor(Shape{b, p}), {}};
  for (auto& v : batch.inputs.values()) v = g(rng);
  for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(label(rng));
  return batch;
}

}  // namespace

TEST(Encode, IdentityNetworkPassesNonnegativeInput) {
  auto m = single_layer(Tensor::matrix(2, 2, {1, 0, 0, 1}),
                        Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const auto x = Tensor::matrix(1, 2, {0.3, 2.0});
  EXPECT_EQ(encode(m, x), x);
}

TEST(Encode, ZeroWeightsGiveZeroEmbeddings) {
  auto m = single_layer(Tensor(Shape{3, 2}), Tensor(Shape{2, 3}, 1.0));
  const auto z = encode(m, Tensor::matrix(2, 2, {1, -2, 3, 4}));
  for (auto v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, HandArithmetic) {
  auto m = single_layer(Tensor::matrix(1, 2, {1, -1}), Tensor::matrix(2, 1, {1, -1}));
  EXPECT_EQ(encode(m, Tensor::matrix(1, 2, {2, 1}))[0], 1.0);
  EXPECT_THROW(encode(m, Tensor::matrix(1, 3, {2, 1, 0})), ShapeError);
}

TEST(Predict, NearestClassEmbeddingWithLowIndexTieBreak) {
  Model m;  // empty encoder: g(x) = x
  m.logit_matrix = Tensor::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(predict(m, Tensor::matrix(1, 2, {0.9, 0.1})),
            std::vector<std::size_t>{0});
  EXPECT_EQ(predict(m, Tensor::matrix(1, 2, {0.0, 0.0})),
            std::vector<std::size_t>{0});
}

TEST(Predict, InvariantToSharedPositiveScaleOfLogitMatrix) {
  Rng rng(4);
  auto m = Model::initialize(5, {7}, 3, 4, rng);
  const auto x = random_batch(30, 5, 4, rng).inputs;
  const auto base = predict(m, x);
  m.logit_matrix *= 3.7;
  EXPECT_EQ(predict(m, x), base);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(9);
  std::normal_distribution<double> g(0.0, 20.0);
  Tensor logits(Shape{50, 6});
  for (auto& v : logits.values()) v = g(rng);
  const auto p = softmax(logits);
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (auto v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto shifted = logits;
  for (auto& v : shifted.values()) v += 1000.0;
  const auto q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
}

TEST(Loss, UniformLogitsGiveLogK) {
  Model m;
  m.logit_matrix = Tensor(Shape{2, 3});
  Batch b{Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 4}), {0, 1}};
  EXPECT_NEAR(loss_and_gradient(m, b).loss, std::log(2.0), 1e-15);
}

TEST(Loss, VanishesWithGrowingMargin) {
  Model m;
  m.logit_matrix = Tensor::matrix(2, 1, {1, -1});
  double prev = INFINITY;
  Batch one{Tensor::matrix(1, 1, {1.0}), {0}};
  Batch ten{Tensor::matrix(1, 1, {10.0}), {0}};
  EXPECT_LT(loss_and_gradient(m, ten).loss, loss_and_gradient(m, one).loss);
  for (double margin : {1.0, 10.0, 100.0, 1000.0}) {
    Batch b{Tensor::matrix(1, 1, {margin}), {0}};
    const double loss = loss_and_gradient(m, b).loss;
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 2 + trial % 4, k = 2 + trial % 3, d = 2 + trial % 5;
    auto model = Model::initialize(p, {3 + static_cast<std::size_t>(trial % 3)},
                                   d, k, rng);
    // Nonzero biases keep ReLU units away from the kink at 0.
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& layer : model.encoder) {
      for (auto& v : layer.bias.values()) v = g(rng);
    }
    const auto batch = random_batch(4, p, k, rng);
    const auto analytic = flatten_params(loss_and_gradient(model, batch).grad);
    auto f = [&](const Tensor& flat) {
      return loss_and_gradient(unflatten_params(model, flat), batch).loss;
    };
    const auto numeric = finite_difference_gradient(f, flatten_params(model), 1e-5);
    EXPECT_LT(relative_error(analytic, numeric), 1e-5) << "trial " << trial;
  }
}

TEST(Loss, RejectsBadLabels) {
  Model m;
  m.logit_matrix = Tensor(Shape{2, 1});
  EXPECT_THROW(loss_and_gradient(m, Batch{Tensor::matrix(1, 1, {1}), {2}}),
               ShapeError);
  EXPECT_THROW(loss_and_gradient(m, Batch{Tensor::matrix(2, 1, {1, 2}), {0}}),
               ShapeError);
}

TEST(Params, FlattenOrderAndRoundTrip) {
  Model m = single_layer(Tensor::matrix(2, 1, {1, 2}), Tensor::matrix(2, 2, {5, 6, 7, 8}));
  m.encoder[0].bias = Tensor::vector({3, 4});
  EXPECT_EQ(flatten_params(m), Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8}));

  Rng rng(1);
  const auto big = Model::initialize(6, {9, 4}, 5, 3, rng);
  EXPECT_EQ(unflatten_params(big, flatten_params(big)), big);
  const auto zeros = flatten_params(Model::zeros_like(big));
  for (auto v : zeros.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(unflatten_params(big, Tensor::vector({1, 2})), ShapeError);
}

TEST(Init, FanBalancedUniformBounds) {
  Rng rng(3);
  const auto m = Model::initialize(32, {64}, 16, 8, rng);
  m.validate();
  EXPECT_EQ(m.input_dim(), 32u);
  EXPECT_EQ(m.embedding_dim(), 16u);
  EXPECT_EQ(m.num_classes(), 8u);
  const double limit0 = std::sqrt(6.0 / (32 + 64));
  for (auto v : m.encoder[0].weights.values()) EXPECT_LE(std::abs(v), limit0);
  for (auto v : m.encoder[0].bias.values()) EXPECT_EQ(v, 0.0);
  Rng again(3);
  EXPECT_EQ(Model::initialize(32, {64}, 16, 8, again), m);
  EXPECT_THROW(Model::initialize(32, {64}, 16, 1, rng), ShapeError);
}

TEST(Compatibility, EquivalenceOnShapes) {
  Rng rng(5);
  const auto a = Model::initialize(4, {6}, 3, 2, rng);
  const auto b = Model::initialize(4, {6}, 3, 2, rng);
  const auto c = Model::initialize(4, {5}, 3, 2, rng);
  EXPECT_TRUE(compatible(a, a));
  EXPECT_TRUE(compatible(a, b) && compatible(b, a));
  EXPECT_FALSE(compatible(a, c));
  EXPECT_THROW(require_compatible(a, c, "test"), ShapeError);
}

TEST(Checkpoint, RoundTripAndHeader) {
  Rng rng(8);
  const auto m = Model::initialize(5, {4}, 3, 2, rng);
  std::stringstream buf;
  write_checkpoint(buf, m);
  const auto bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "FSVM");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(read_checkpoint(buf), m);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
  std::stringstream wrong("XXXX" + bytes.substr(4));
  EXPECT_THROW(read_checkpoint(wrong), FormatError);
}
