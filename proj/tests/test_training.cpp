#include <cmath>
#include <fstream>

#include "mature/training.hpp"
#include "test_util.hpp"

using namespace mature;
using mature::test::random_matrix;

namespace {

ModelSpec small(ModelKind kind, Index tau = 3) {
  ModelSpec s;
  s.kind = kind;
  s.hidden = 6;
  s.tau = tau;
  s.memory = {2, 4};
  s.gamma = 0.4;
  s.epsilon = 0.3;
  s.mlp_layers = {8, 6, 6, 4};
  return s;
}

struct Windows {
  WindowSet train, validation;
};

Windows random_windows(std::uint64_t seed, Index T, Index tau, StationCounts counts) {
  std::mt19937_64 rng(seed);
  const Matrix r = random_matrix(rng, T, counts.intensive, 0, 1);
  const Matrix s = random_matrix(rng, T, counts.sparse, 0, 1);
  const Index cut = T * 3 / 4;
  return {WindowSet(r, s, {0, cut}, tau), WindowSet(r, s, {cut, T}, tau)};
}

double value(const Var& v) { return v.value()(0, 0); }

}  // namespace

TEST(Loss, EpsilonSelectsModes) {
  std::mt19937_64 rng(1);
  const Matrix pr = random_matrix(rng, 3, 4), tr = random_matrix(rng, 3, 4);
  const Matrix ps = random_matrix(rng, 2, 4), ts = random_matrix(rng, 2, 4);
  const Matrix ps2 = random_matrix(rng, 2, 4), pr2 = random_matrix(rng, 3, 4);
  Tape t;
  auto L = [&](const Matrix& a, const Matrix& b, double eps) {
    return value(multitask_loss(t.constant(a), t.constant(tr), t.constant(b), t.constant(ts), eps));
  };
  EXPECT_EQ(L(pr, ps, 1.0), L(pr, ps2, 1.0));
  EXPECT_EQ(L(pr, ps, 0.0), L(pr2, ps, 0.0));
  EXPECT_NE(L(pr, ps, 0.5), L(pr, ps2, 0.5));
  EXPECT_EQ(value(multitask_loss(t.constant(tr), t.constant(tr), t.constant(ts), t.constant(ts), 0.1)), 0.0);
  const double mse_r = (pr - tr).squaredNorm() / 12.0, mse_s = (ps - ts).squaredNorm() / 8.0;
  EXPECT_NEAR(L(pr, ps, 0.1), 0.1 * mse_r + 0.9 * mse_s, 1e-15);
}

TEST(Loss, EpsilonZeroesHeadGradients) {
  const ModelSpec spec = small(ModelKind::kMATURE);
  Forecaster f = Forecaster::build(spec, {3, 2}, 0);
  const Windows w = random_windows(0, 40, spec.tau, {3, 2});
  const WindowedBatch batch = w.train.all();
  for (double eps : {0.0, 1.0}) {
    f.parameters().zero_grad();
    Tape t;
    t.backward(forecast_loss(t, f.forward(t, batch.inputs), batch, eps));
    const std::string silent = eps == 1.0 ? "head_S." : "head_R.";
    const std::string live = eps == 1.0 ? "head_R." : "head_S.";
    for (const char* n : {"W1", "b1", "W2", "b2"}) {
      EXPECT_TRUE(f.parameters().at(silent + n).grad.isZero()) << silent << n;
    }
    EXPECT_FALSE(f.parameters().at(live + "W2").grad.isZero());
  }
}

TEST(AdamTest, FirstStepClosedForm) {
  ParameterSet ps;
  Parameter& p = ps.add("w", Matrix::Zero(1, 4));
  p.grad = (Matrix(1, 4) << 1.0, -3.0, 1e-6, -1e-9).finished();
  Adam adam;
  adam.step(ps, 0.01, 0.0);
  for (Index i = 0; i < 4; ++i) {
    const double g = p.grad(0, i);
    EXPECT_NEAR(p.value(0, i), -0.01 * g / (std::abs(g) + 1e-8), 1e-17);
  }
  EXPECT_EQ(adam.steps(), 1);
  EXPECT_TRUE(adam.first_moment("w").isApprox(0.1 * p.grad));
}

TEST(AdamTest, ZeroGradientAndPureShrink) {
  ParameterSet ps;
  std::mt19937_64 rng(5);
  const Matrix start = random_matrix(rng, 3, 3);
  Parameter& p = ps.add("w", start);
  p.zero_grad();
  Adam adam;
  for (int i = 0; i < 3; ++i) adam.step(ps, 0.01, 0.0);
  EXPECT_TRUE(test::bitwise_equal(p.value, start));
  adam.step(ps, 0.01, 0.5);
  EXPECT_TRUE(test::exactly_equal(p.value, (start * (1.0 - 0.01 * 0.5)).eval()));
}

TEST(AdamTest, NonFiniteGradientNamesParameterAndLeavesValues) {
  ParameterSet ps;
  Parameter& a = ps.add("alpha", Matrix::Ones(2, 1));
  Parameter& b = ps.add("beta", Matrix::Ones(2, 1));
  a.grad = Matrix::Ones(2, 1);
  b.grad = Matrix::Ones(2, 1);
  b.grad(1, 0) = std::nan("");
  Adam adam;
  try {
    adam.step(ps, 0.1, 0.0);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(a.value.isOnes());
  EXPECT_TRUE(b.value.isOnes());
}

TEST(AdamTest, QuadraticBowlDecreasesMonotonically) {
  ParameterSet ps;
  Parameter& w = ps.add("w", Matrix::Constant(5, 1, 1.0));
  const Matrix target = (Matrix(5, 1) << -1, 0.5, 2, 0, -0.25).finished();
  Adam adam;
  double prev = 1e300;
  for (int i = 0; i < 200; ++i) {
    ps.zero_grad();
    Tape t;
    Var loss = sum(mul(sub(t.parameter(w), t.constant(target)), sub(t.parameter(w), t.constant(target))));
    t.backward(loss);
    EXPECT_LT(value(loss), prev) << "step " << i;
    prev = value(loss);
    adam.step(ps, 0.005, 0.0);
  }
}

TEST(Clip, ScalesToMaxNorm) {
  ParameterSet ps;
  Parameter& a = ps.add("a", Matrix::Zero(2, 1));
  Parameter& b = ps.add("b", Matrix::Zero(1, 1));
  a.grad = (Matrix(2, 1) << 3, 4).finished();
  b.grad = Matrix::Constant(1, 1, 12);
  EXPECT_DOUBLE_EQ(clip_gradients(ps, 5.0), 13.0);
  EXPECT_NEAR(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()), 5.0, 1e-12);
  EXPECT_NEAR(b.grad(0, 0), 12.0 * 5.0 / 13.0, 1e-12);
  EXPECT_DOUBLE_EQ(clip_gradients(ps, 10.0), 5.0);
  EXPECT_NEAR(b.grad(0, 0), 12.0 * 5.0 / 13.0, 1e-12);
}

TEST(Train, OverfitsEightSamples) {
  const ModelSpec spec = small(ModelKind::kMATURE);
  Forecaster f = Forecaster::build(spec, {3, 2}, 0);
  std::mt19937_64 rng(2);
  const Index T = 8 + spec.tau;
  const WindowSet tiny(random_matrix(rng, T, 3, 0, 1), random_matrix(rng, T, 2, 0, 1), {0, T}, spec.tau);
  ASSERT_EQ(tiny.size(), 8);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  cfg.batch_size = 8;
  cfg.epochs = 600;
  cfg.patience = -1;
  const TrainResult r = train(f, tiny, WindowSet(), cfg);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.best_loss, 1e-3);
  EXPECT_LT(evaluate_loss(f, tiny, spec.epsilon, 8), 1e-3);
}

TEST(Train, SameSeedIsBitwiseReproducible) {
  const ModelSpec spec = small(ModelKind::kMARNC);
  const Windows w = random_windows(3, 60, spec.tau, {3, 2});
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 11;
  Forecaster a = Forecaster::build(spec, {3, 2}, 1), b = Forecaster::build(spec, {3, 2}, 1);
  const TrainResult ra = train(a, w.train, w.validation, cfg), rb = train(b, w.train, w.validation, cfg);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    EXPECT_EQ(std::memcmp(&ra.history[i].train_loss, &rb.history[i].train_loss, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&ra.history[i].val_loss, &rb.history[i].val_loss, sizeof(double)), 0);
  }
  for (const Parameter& p : a.parameters()) EXPECT_TRUE(test::bitwise_equal(p.value, b.parameters().at(p.name).value));

  cfg.seed = 12;
  Forecaster c = Forecaster::build(spec, {3, 2}, 1);
  const TrainResult rc = train(c, w.train, w.validation, cfg);
  EXPECT_NE(rc.history.back().train_loss, ra.history.back().train_loss);
}

TEST(Train, PatienceZeroStopsAtFirstNonImprovement) {
  const ModelSpec spec = small(ModelKind::kLSTM);
  const Windows w = random_windows(4, 80, spec.tau, {0, 2});
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  cfg.patience = 0;
  Forecaster f = Forecaster::build(spec, {0, 2}, 4);
  const TrainResult r = train(f, w.train, w.validation, cfg);
  ASSERT_TRUE(r.stopped_early);
  const auto& h = r.history;
  double best = h.front().val_loss;
  for (std::size_t i = 1; i + 1 < h.size(); ++i) {
    EXPECT_LT(h[i].val_loss, best) << "epoch " << i << " did not improve but training went on";
    best = h[i].val_loss;
  }
  EXPECT_GE(h.back().val_loss, best);
  ASSERT_GE(h.size(), 2u);
  EXPECT_EQ(r.best_epoch, h[h.size() - 2].epoch);
  // Best parameters are restored.
  EXPECT_DOUBLE_EQ(evaluate_loss(f, w.validation, spec.epsilon, 64), r.best_loss);
}

TEST(Train, MatureGammaOneFollowsMarnSTrajectory) {
  ModelSpec mature = small(ModelKind::kMATURE);
  mature.gamma = 1.0;
  const ModelSpec marns = small(ModelKind::kMARNS);
  const Windows w = random_windows(5, 60, mature.tau, {3, 2});
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 2;
  Forecaster a = Forecaster::build(mature, {3, 2}, 9), b = Forecaster::build(marns, {3, 2}, 9);
  const TrainResult ra = train(a, w.train, w.validation, cfg), rb = train(b, w.train, w.validation, cfg);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    EXPECT_EQ(ra.history[i].train_loss, rb.history[i].train_loss);
    EXPECT_EQ(ra.history[i].val_loss, rb.history[i].val_loss);
  }
  for (const Parameter& p : b.parameters()) EXPECT_TRUE(test::bitwise_equal(p.value, a.parameters().at(p.name).value)) << p.name;
  const WindowedBatch batch = w.validation.all();
  EXPECT_TRUE(test::bitwise_equal(a.predict(batch.inputs).sparse, b.predict(batch.inputs).sparse));
}

TEST(Train, HistoryCsv) {
  const ModelSpec spec = small(ModelKind::kLSTM);
  const Windows w = random_windows(6, 40, spec.tau, {0, 2});
  TrainConfig cfg;
  cfg.epochs = 2;
  Forecaster f = Forecaster::build(spec, {0, 2}, 0);
  const TrainResult r = train(f, w.train, w.validation, cfg);
  const auto dir = test::temp_dir("history");
  write_history_csv(r, (dir / "h.csv").string());
  std::ifstream in(dir / "h.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,train_loss,val_loss,lr");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(TrainConfigTest, JsonAndValidation) {
  TrainConfig c;
  c.epochs = 7;
  c.shuffle = false;
  const nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<TrainConfig>()), j);
  nlohmann::json bad = j;
  bad["momentum"] = 0.9;
  EXPECT_ANY_THROW(bad.get<TrainConfig>());
  c.batch_size = 0;
  EXPECT_ANY_THROW(c.validate());
}

class ModelGradCheck : public ::testing::TestWithParam<ModelKind> {};

TEST_P(ModelGradCheck, AllParametersWithinTolerance) {
  const ModelKind kind = GetParam();
  ModelSpec spec = small(kind, 4);
  spec.hidden = 5;
  const StationCounts counts = is_multi_task(kind) ? StationCounts{2, 2} : StationCounts{0, 2};
  const GradCheckReport r = grad_check_model(spec, counts, 0, 2, 1e-4);
  EXPECT_TRUE(r.passed()) << to_string(kind) << ": " << r.worst_parameter() << " " << r.max_error() << " " << r.failure;
}

INSTANTIATE_TEST_SUITE_P(Kinds, ModelGradCheck,
                         ::testing::Values(ModelKind::kMLP, ModelKind::kLSTM, ModelKind::kCLSTM, ModelKind::kMTLSTM,
                                           ModelKind::kMARN, ModelKind::kMARNS, ModelKind::kMARNC, ModelKind::kMATURE),
                         [](const auto& info) {
                           std::string n = to_string(info.param);
                           std::erase(n, '-');
                           return n;
                         });
