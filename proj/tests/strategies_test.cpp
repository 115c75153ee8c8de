#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedsvm/aggregation.hpp"
#include "fedsvm/client.hpp"
#include "fedsvm/error.hpp"
#include "fedsvm/finite_difference.hpp"
#include "fedsvm/round.hpp"

using namespace fedsvm;

namespace {

Model scalar_model(std::vector<double> logits) {
  Model m;
  const auto n = logits.size();
  m.logit_matrix = Tensor::matrix(1, n, std::move(logits));
  return m;
}

Tensor random_tensor(Shape shape, Rng& rng, double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, sigma);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = g(rng);
  return t;
}

ClientData random_client(std::size_t n, std::size_t p, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> label(0, k - 1);
  ClientData data{random_tensor({n, p}, rng), {}};
  for (std::size_t i = 0; i < n; ++i) data.labels.push_back(label(rng));
  return data;
}

Model random_model(Rng& rng) {
  auto m = Model::initialize(5, {6}, 4, 3, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& layer : m.encoder)
    for (auto& b : layer.bias.values()) b = g(rng);
  return m;
}

FederatedDataset small_dataset(std::uint64_t seed, double spread = 0.0) {
  SyntheticSpec spec;
  spec.num_clients = 8;
  spec.num_classes = 3;
  spec.feature_dim = 5;
  spec.samples_mean = 20;
  spec.samples_spread = spread;
  spec.dirichlet_alpha = 1.0;
  spec.seed = seed;
  return generate_synthetic(spec);
}

OvoSvm random_ovo(std::size_t k, std::size_t clients, std::size_t d, Rng& rng) {
  std::vector<std::vector<WeightedEmbedding>> members(k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t n = 0; n < clients; ++n)
      members[c].push_back({n, random_tensor({d}, rng), 1.0 + static_cast<double>(n)});
  return fit_ovo(std::move(members), 1.0);
}

struct QuietWarnings {
  QuietWarnings() { set_warning_sink(nullptr); }
  ~QuietWarnings() { set_warning_sink(+[](std::string_view) {}); }
};

}  // namespace

TEST(ClientUpdate, SingleBatchMatchesManualStep) {
  Rng rng(3);
  const auto global = random_model(rng);
  const auto data = random_client(10, 5, 3, rng);
  ClientConfig config;
  config.batch_size = 64;
  config.learning_rate = 0.05;

  Rng a(77), replay(77);
  const auto result = client_update(global, data, config, a);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), replay);
  Batch batch{Tensor(Shape{order.size(), 5}), {}};
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy_n(data.features.row(order[i]).begin(), 5, batch.inputs.row(i).begin());
    batch.labels.push_back(data.labels[order[i]]);
  }
  const auto lg = loss_and_gradient(global, batch);
  auto sgd = OptimizerState::sgd(config.learning_rate);
  const auto expected =
      unflatten_params(global, sgd_step(flatten_params(global), flatten_params(lg.grad), sgd));

  EXPECT_EQ(result.model, expected);
  EXPECT_EQ(result.steps, 1u);
  EXPECT_EQ(result.mean_loss, lg.loss);
}

TEST(ClientUpdate, ProxWithZeroMuIsVanilla) {
  Rng rng(4);
  const auto global = random_model(rng);
  const auto data = random_client(37, 5, 3, rng);
  ClientConfig vanilla;
  vanilla.epochs = 3;
  vanilla.batch_size = 8;
  ClientConfig prox = vanilla;
  prox.variant = Prox{0.0};
  Rng a(9), b(9);
  EXPECT_EQ(client_update(global, data, vanilla, a).model,
            client_update(global, data, prox, b).model);
}

TEST(ClientUpdate, ZeroLearningRateLeavesModel) {
  Rng rng(5);
  const auto global = random_model(rng);
  const auto data = random_client(12, 5, 3, rng);
  ClientConfig config;
  config.learning_rate = 0.0;
  config.batch_size = 5;
  EXPECT_EQ(client_update(global, data, config, rng).model, global);
}

TEST(ClientUpdate, LastPartialBatchIsKept) {
  Rng rng(6);
  const auto global = random_model(rng);
  ClientConfig config;
  config.epochs = 2;
  config.batch_size = 4;
  EXPECT_EQ(client_update(global, random_client(10, 5, 3, rng), config, rng).steps, 6u);
}

TEST(ClientUpdate, RejectsEmptyDataAndWrongWidth) {
  Rng rng(7);
  const auto global = random_model(rng);
  EXPECT_THROW(client_update(global, ClientData{}, ClientConfig{}, rng), Error);
  EXPECT_THROW(client_update(global, random_client(4, 6, 3, rng), ClientConfig{}, rng),
               ShapeError);
}

TEST(ClientObjective, ProxAndMoonGradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_model(rng);
    const auto global = random_model(rng);
    const auto previous = random_model(rng);
    const auto data = random_client(6, 5, 3, rng);
    const Batch batch{data.features, data.labels};
    for (const ClientVariant variant :
         {ClientVariant{Prox{0.7}}, ClientVariant{Moon{1.3, 0.5}}}) {
      ClientConfig config;
      config.variant = variant;
      const auto analytic = client_objective(model, batch, config, global, previous);
      const auto numeric = finite_difference_gradient(
          [&](const Tensor& flat) {
            return client_objective(unflatten_params(model, flat), batch, config, global,
                                    previous)
                .loss;
          },
          flatten_params(model));
      EXPECT_LT(relative_error(flatten_params(analytic.grad), numeric), 1e-5)
          << "trial " << trial << " variant " << variant.index();
    }
  }
}

TEST(Prox, GradientVanishesAtGlobal) {
  const auto t = Tensor::vector({1.5, -2.0, 0.25});
  const auto grad = prox_gradient(t, t, 0.3);
  for (auto v : grad.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(prox_loss(t, t, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(prox_loss(Tensor::vector({3.0}), Tensor::vector({1.0}), 0.5), 1.0);
}

TEST(Moon, LossValuesAndGuard) {
  const auto z = Tensor::matrix(1, 2, {1, 0});
  // Equal similarities: -log(1/2).
  EXPECT_NEAR(moon_contrastive_loss(z, z, z, 0.5, nullptr), std::log(2.0), 1e-15);
  const auto zero = Tensor::matrix(1, 2, {0, 0});
  EXPECT_EQ(cosine(zero.row(0), z.row(0)), 0.0);
  Tensor grad;
  moon_contrastive_loss(zero, z, Tensor::matrix(1, 2, {0, 1}), 0.5, &grad);
  for (auto v : grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Moon, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_tensor({4, 3}, rng);
    const auto zg = random_tensor({4, 3}, rng);
    const auto zp = random_tensor({4, 3}, rng);
    Tensor grad;
    moon_contrastive_loss(z, zg, zp, 0.5, &grad);
    const auto numeric = finite_difference_gradient(
        [&](const Tensor& x) { return moon_contrastive_loss(x, zg, zp, 0.5, nullptr); }, z);
    EXPECT_LT(relative_error(grad, numeric), 1e-5);
  }
}

TEST(FedAvg, WeightedMeanExamples) {
  const auto m = fedavg_aggregate({scalar_model({2}), scalar_model({4})}, {1, 3});
  EXPECT_EQ(m.logit_matrix[0], 3.5);

  Rng rng(11);
  const auto a = random_model(rng);
  EXPECT_EQ(fedavg_aggregate({a, a, a}, {1, 7, 2.5}), a);
  EXPECT_EQ(fedavg_aggregate({a}, {42}), a);
}

TEST(FedAvg, Errors) {
  EXPECT_THROW(fedavg_aggregate({}, {}), Error);
  EXPECT_THROW(fedavg_aggregate({scalar_model({1}), scalar_model({1, 2})}, {1, 1}),
               ShapeError);
  EXPECT_THROW(fedavg_aggregate({scalar_model({1})}, {0}), Error);
}

TEST(PseudoGradient, Examples) {
  const auto g = scalar_model({1, 1});
  EXPECT_EQ(pseudo_gradient(g, scalar_model({2, 0})), Tensor::vector({1, -1}));
  const auto zero = pseudo_gradient(g, g);
  for (auto v : zero.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(pseudo_gradient(g, scalar_model({1})), ShapeError);
}

TEST(FedOpt, SgdLrOneReproducesFedAvg) {
  Rng rng(12);
  const auto global = random_model(rng);
  std::vector<Model> locals{random_model(rng), random_model(rng), random_model(rng)};
  const auto avg = fedavg_aggregate(locals, {3, 5, 11});
  const auto delta = pseudo_gradient(global, avg);
  auto sgd = OptimizerState::sgd(1.0);
  QuietWarnings quiet;
  EXPECT_EQ(fedopt_step(global, delta, sgd), apply_delta(global, delta));
}

TEST(FedOpt, AdamFirstStep) {
  const auto g = scalar_model({0.5});
  auto adam = OptimizerState::adam(0.1);
  const auto moved = fedopt_step(g, Tensor::vector({1.0}), adam);
  EXPECT_NEAR(moved.logit_matrix[0] - 0.5, 0.1, 1e-7);

  auto zero = OptimizerState::adam(0.1);
  EXPECT_EQ(fedopt_step(g, Tensor::vector({0.0}), zero), g);

  auto ams = OptimizerState::amsgrad(0.1);
  EXPECT_EQ(fedopt_step(g, Tensor::vector({1.0}), ams), moved);
}

TEST(FedAwS, Examples) {
  Tensor grad;
  const auto ortho = Tensor::matrix(3, 3, {1, 0, 0, 0, 2, 0, 0, 0, 3});
  EXPECT_EQ(fedaws_loss(ortho, &grad), 0.0);
  for (auto v : grad.values()) EXPECT_EQ(v, 0.0);
  auto state = OptimizerState::adam(0.1);
  EXPECT_EQ(fedaws_regularize(ortho, state), ortho);

  EXPECT_DOUBLE_EQ(fedaws_loss(Tensor::matrix(2, 2, {1, 1, 2, 2})), 1.0);
  // Negative cosine is not penalized.
  EXPECT_EQ(fedaws_loss(Tensor::matrix(2, 2, {1, 0, -1, 0.5})), 0.0);
  EXPECT_THROW(fedaws_loss(Tensor::matrix(2, 2, {1, 1, 0, 0})), NumericError);
}

TEST(FedAwS, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_tensor({4, 3}, rng);
    Tensor grad;
    fedaws_loss(w, &grad);
    const auto numeric =
        finite_difference_gradient([](const Tensor& x) { return fedaws_loss(x); }, w);
    EXPECT_LT(relative_error(grad, numeric), 1e-5);
  }
}

TEST(SpreadOut, PairTermExamples) {
  const std::vector<Tensor> normals{Tensor::vector({2, 0})};
  EXPECT_EQ(spread_out_loss(Tensor::matrix(2, 2, {1, 5, 1, -3}), normals), 1.0);
  // ((w_0 - w_1).h)^2 = 8 = 2 |h|^2
  const double v = spread_out_loss(Tensor::matrix(2, 2, {std::sqrt(2.0), 0, 0, 0}), normals);
  EXPECT_NEAR(v, std::exp(-1.0), 1e-15);
  EXPECT_NEAR(v, 0.367879, 1e-6);
}

TEST(SpreadOut, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> normals;
    for (int p = 0; p < 6; ++p) normals.push_back(random_tensor({3}, rng));
    const auto w = random_tensor({4, 3}, rng, 0.5);
    Tensor grad;
    spread_out_loss(w, normals, &grad);
    const auto numeric = finite_difference_gradient(
        [&](const Tensor& x) { return spread_out_loss(x, normals); }, w);
    EXPECT_LT(relative_error(grad, numeric), 1e-5);
  }
}

TEST(SpreadOut, AdamStepsStrictlyDecrease) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const auto svm = random_ovo(4, 5, 3, rng);
    const auto w = random_tensor({4, 3}, rng, 0.1);
    for (std::size_t steps = 1; steps <= 10; ++steps) {
      auto state = OptimizerState::adam(1e-2);
      std::vector<double> losses;
      turbosvm_maxmargin_regularize(w, svm, state, steps, &losses);
      ASSERT_EQ(losses.size(), steps + 1);
      for (std::size_t i = 1; i < losses.size(); ++i)
        EXPECT_LT(losses[i], losses[i - 1]) << "trial " << trial << " step " << i;
    }
  }
}

TEST(SelectiveAggregate, WeightedMeanOfSupportVectors) {
  // Tiny lambda puts every sample inside the margin.
  std::vector<std::vector<WeightedEmbedding>> members(2);
  members[0] = {{1, Tensor::vector({0}), 1}, {3, Tensor::vector({4}), 3}};
  members[1] = {{1, Tensor::vector({1}), 1}, {3, Tensor::vector({3}), 3}};
  const auto svm = fit_ovo(members, 1e-3);
  ASSERT_EQ(support_vectors_of_class(svm, 0).size(), 2u);
  const auto w = turbosvm_selective_aggregate(svm);
  EXPECT_EQ(w.at(0, 0), 3.0);
  EXPECT_EQ(w.at(1, 0), 2.5);
}

TEST(SelectiveAggregate, SingleClientKeepsRows) {
  std::vector<std::vector<WeightedEmbedding>> members(3);
  members[0] = {{0, Tensor::vector({1, 0}), 5}};
  members[1] = {{0, Tensor::vector({0, 1}), 5}};
  members[2] = {{0, Tensor::vector({-1, -1}), 5}};
  const auto w = turbosvm_selective_aggregate(fit_ovo(members, 1.0));
  EXPECT_EQ(w, Tensor::matrix(3, 2, {1, 0, 0, 1, -1, -1}));
}

TEST(Lambda, ScheduleValues) {
  LambdaSchedule s;
  s.total_rounds = 100;
  EXPECT_EQ(lambda_value(s, 0), 1.0);
  EXPECT_NEAR(lambda_value(s, 99), 0.01, 1e-15);
  for (std::size_t t = 0; t + 1 < 100; ++t) {
    EXPECT_LE(lambda_value(s, t + 1), lambda_value(s, t));
    EXPECT_GE(lambda_value(s, t), s.floor);
  }
  EXPECT_THROW(lambda_value(s, 100), Error);
  s.shape = LambdaShape::Constant;
  EXPECT_EQ(lambda_value(s, 50), 1.0);
  s.shape = LambdaShape::Increasing;
  EXPECT_DOUBLE_EQ(lambda_value(s, 99), 1.0);
}

TEST(Sampling, UniformFrequencies) {
  std::vector<std::size_t> pool(10);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<int> hits(10, 0);
  Rng rng(16);
  for (int r = 0; r < 10000; ++r) {
    const auto s = sample_clients(pool, 3, rng);
    ASSERT_EQ(s.size(), 3u);
    ASSERT_TRUE(std::is_sorted(s.begin(), s.end()));
    for (auto c : s) ++hits[c];
  }
  for (auto h : hits) {
    EXPECT_GE(h / 10000.0, 0.27);
    EXPECT_LE(h / 10000.0, 0.33);
  }
}

TEST(RunRound, DeterministicRecord) {
  const auto ds = small_dataset(1, 5.0);
  Rng init(2);
  const auto global = Model::initialize(5, {6}, 4, 3, init);
  ServerStrategy s;
  s.kind = ServerKind::TurboSvm;
  s.lambda.total_rounds = 5;
  auto run = [&] {
    auto state = make_server_state(s, ds.num_clients());
    Rng rng(3);
    return run_round(0, global, ds, 4, s, ClientConfig{}, state, rng);
  };
  QuietWarnings quiet;
  const auto a = run(), b = run();
  EXPECT_EQ(a.record, b.record);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.record.sv_counts.size(), 3u);
}

TEST(RunRound, FedOptSgdMatchesFedAvg) {
  const auto ds = small_dataset(4, 5.0);
  Rng init(5);
  auto g_avg = Model::initialize(5, {6}, 4, 3, init);
  auto g_opt = g_avg;
  ServerStrategy avg;
  ServerStrategy opt;
  opt.kind = ServerKind::FedOpt;
  opt.optimizer = OptimizerKind::Sgd;
  opt.server_lr = 1.0;
  auto st_avg = make_server_state(avg, ds.num_clients());
  auto st_opt = make_server_state(opt, ds.num_clients());
  Rng r_avg(6), r_opt(6);
  QuietWarnings quiet;
  for (std::size_t t = 0; t < 5; ++t) {
    g_avg = run_round(t, g_avg, ds, 3, avg, ClientConfig{}, st_avg, r_avg).model;
    g_opt = run_round(t, g_opt, ds, 3, opt, ClientConfig{}, st_opt, r_opt).model;
    ASSERT_EQ(g_avg, g_opt) << "round " << t;
  }
}

TEST(RunRound, TurboSvmEncoderMatchesFedAvg) {
  const auto ds = small_dataset(7, 5.0);
  Rng init(8);
  const auto global = Model::initialize(5, {6}, 4, 3, init);
  ServerStrategy avg;
  ServerStrategy turbo;
  turbo.kind = ServerKind::TurboSvm;
  turbo.lambda.total_rounds = 10;
  auto st_avg = make_server_state(avg, ds.num_clients());
  auto st_turbo = make_server_state(turbo, ds.num_clients());
  Rng r1(9), r2(9);
  QuietWarnings quiet;
  const auto a = run_round(0, global, ds, 4, avg, ClientConfig{}, st_avg, r1).model;
  const auto b = run_round(0, global, ds, 4, turbo, ClientConfig{}, st_turbo, r2).model;
  EXPECT_EQ(a.encoder, b.encoder);
  EXPECT_NE(a.logit_matrix, b.logit_matrix);
}

TEST(RunRound, DegenerateTurboSvmMatchesFedAvg) {
  // Equal client sizes, every embedding a support vector, no regularization.
  const auto ds = small_dataset(10);
  Rng init(11);
  auto g_avg = Model::initialize(5, {6}, 4, 3, init);
  auto g_turbo = g_avg;
  ServerStrategy avg;
  ServerStrategy turbo;
  turbo.kind = ServerKind::TurboSvm;
  turbo.reg_steps = 0;
  turbo.lambda = {1e-6, 1e-6, 5, LambdaShape::Constant};
  auto st_avg = make_server_state(avg, ds.num_clients());
  auto st_turbo = make_server_state(turbo, ds.num_clients());
  Rng r1(12), r2(12);
  QuietWarnings quiet;
  for (std::size_t t = 0; t < 5; ++t) {
    g_avg = run_round(t, g_avg, ds, 4, avg, ClientConfig{}, st_avg, r1).model;
    const auto res = run_round(t, g_turbo, ds, 4, turbo, ClientConfig{}, st_turbo, r2);
    g_turbo = res.model;
    for (auto n : res.record.sv_counts) ASSERT_EQ(n, 4u);
    ASSERT_EQ(g_avg, g_turbo) << "round " << t;
  }
}

TEST(RunRound, SingleClientFedAvgIsClientModel) {
  auto ds = small_dataset(13);
  ds.train_clients = {0};
  std::vector<std::size_t> held(ds.num_clients() - 1);
  std::iota(held.begin(), held.end(), std::size_t{1});
  ds.heldout_clients = held;
  Rng init(14);
  const auto global = Model::initialize(5, {6}, 4, 3, init);
  ServerStrategy avg;
  auto state = make_server_state(avg, ds.num_clients());
  Rng rng(15), replay(15);
  const auto res = run_round(0, global, ds, 1, avg, ClientConfig{}, state, rng);
  sample_clients(ds.train_clients, 1, replay);
  Rng client_rng(replay());
  const auto local = client_update(global, ds.clients[0], ClientConfig{}, client_rng);
  const auto a = flatten_params(res.model), b = flatten_params(local.model);
  ASSERT_EQ(a.size(), b.size());
  // theta + (theta_n - theta) may differ from theta_n in the last ulp.
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(a[i], b[i], 4 * std::numeric_limits<double>::epsilon() *
                                std::max(1.0, std::abs(b[i])));
}

TEST(RunRound, ErrorsCarryRoundContext) {
  const auto ds = small_dataset(16);
  Rng init(17);
  const auto global = Model::initialize(4, {6}, 4, 3, init);  // wrong input width
  ServerStrategy avg;
  auto state = make_server_state(avg, ds.num_clients());
  Rng rng(18);
  try {
    run_round(2, global, ds, 2, avg, ClientConfig{}, state, rng);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("round 3"), std::string::npos) << e.what();
  }
}
