#include <cmath>

#include "mature/baselines.hpp"
#include "mature/model.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace mature;
using mature::test::random_matrix;

namespace {

ModelSpec toy(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.hidden = 4;
  s.tau = 5;
  s.memory = {2, 3};
  s.align_dim = 3;
  s.gamma = 0.4;
  s.mlp_layers = {8, 6};
  return s;
}

WindowInputs random_inputs(std::mt19937_64& rng, Index tau, StationCounts counts, Index batch) {
  WindowInputs in;
  for (Index t = 0; t < tau; ++t) {
    if (counts.intensive > 0) in.intensive.push_back(random_matrix(rng, counts.intensive, batch, 0, 1));
    if (counts.sparse > 0) in.sparse.push_back(random_matrix(rng, counts.sparse, batch, 0, 1));
  }
  return in;
}

void randomize(Forecaster& f, std::uint64_t seed, double scale = 0.7) {
  std::mt19937_64 rng(seed);
  for (Parameter& q : f.parameters()) q.value = random_matrix(rng, q.value.rows(), q.value.cols(), -scale, scale);
}

}  // namespace

TEST(Build, MatureToyParameterCount) {
  // Hand total for h=4, K=2, S=3, N_R=2, N_S=1, d=3:
  //   cell(n) = 4(4n + 16 + 4) + 3(3*4 + 3) + (4*3 + 16 + 4*3) = 16n + 165
  //   adaption = 3*6 + 3 + 2(9 + 3) = 45
  //   heads on 8 inputs with 2 hidden units: (16 + 2 + 2*2 + 2) + (16 + 2 + 2 + 1) = 45
  const std::size_t hand = (16 * 2 + 165) + (16 * 1 + 165) + 45 + 45;
  ASSERT_EQ(hand, 468u);
  const Forecaster f = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 0);
  EXPECT_EQ(f.parameters().scalar_count(), hand);
  EXPECT_EQ(expected_parameter_count(toy(ModelKind::kMATURE), {2, 1}), hand);
}

TEST(Build, CountsMatchAnalyticFormulaForEveryKind) {
  for (ModelKind kind : all_model_kinds()) {
    if (!is_trainable(kind)) continue;
    const StationCounts counts = is_multi_task(kind) ? StationCounts{3, 2} : StationCounts{0, 2};
    const Forecaster f = Forecaster::build(toy(kind), counts, 1);
    EXPECT_EQ(f.parameters().scalar_count(), expected_parameter_count(toy(kind), counts)) << to_string(kind);
  }
}

TEST(Build, SameSeedIsBitwiseIdentical) {
  const Forecaster a = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 42);
  const Forecaster b = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 42);
  const Forecaster c = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 43);
  bool any_differs = false;
  for (const Parameter& p : a.parameters()) {
    EXPECT_TRUE(test::bitwise_equal(p.value, b.parameters().at(p.name).value)) << p.name;
    any_differs |= !test::bitwise_equal(p.value, c.parameters().at(p.name).value);
  }
  EXPECT_TRUE(any_differs);
}

TEST(Build, ModeArityIsChecked) {
  EXPECT_THROW(Forecaster::build(toy(ModelKind::kLSTM), {2, 1}, 0), SpecError);
  EXPECT_THROW(Forecaster::build(toy(ModelKind::kMATURE), {2, 0}, 0), SpecError);
  EXPECT_THROW(Forecaster::build(toy(ModelKind::kHA), {0, 1}, 0), SpecError);
  ModelSpec bad = toy(ModelKind::kMATURE);
  bad.gamma = 1.5;
  EXPECT_THROW(Forecaster::build(bad, {2, 1}, 0), SpecError);
}

TEST(Build, KindNamesRoundTrip) {
  for (ModelKind kind : all_model_kinds()) EXPECT_EQ(parse_model_kind(to_string(kind)), kind);
  EXPECT_EQ(parse_model_kind("marn-s"), ModelKind::kMARNS);
  EXPECT_THROW(parse_model_kind("GCRN"), SpecError);
}

TEST(Spec, JsonRoundTripAndUnknownKey) {
  ModelSpec s = toy(ModelKind::kMARNC);
  s.mode = Mode::kIntensive;
  const nlohmann::json j = s;
  const ModelSpec back = j.get<ModelSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  nlohmann::json extra = j;
  extra["heads"] = 3;
  EXPECT_THROW(extra.get<ModelSpec>(), SpecError);
}

TEST(Forward, ShapeMismatchIsDimensionError) {
  Forecaster f = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 0);
  std::mt19937_64 rng(0);
  WindowInputs in = random_inputs(rng, 5, {2, 1}, 3);
  in.sparse.pop_back();
  EXPECT_THROW(f.predict(in), DimensionError);
  WindowInputs wide = random_inputs(rng, 5, {3, 1}, 3);
  EXPECT_THROW(f.predict(wide), DimensionError);
}

TEST(Forward, OutputShapes) {
  std::mt19937_64 rng(1);
  for (ModelKind kind : all_model_kinds()) {
    if (!is_trainable(kind)) continue;
    const bool multi = is_multi_task(kind);
    const StationCounts counts = multi ? StationCounts{3, 2} : StationCounts{0, 2};
    Forecaster f = Forecaster::build(toy(kind), counts, 1);
    const ForecastValues v = f.predict(random_inputs(rng, 5, counts, 4));
    EXPECT_EQ(v.sparse.rows(), 2) << to_string(kind);
    EXPECT_EQ(v.sparse.cols(), 4);
    EXPECT_EQ(v.intensive.rows(), multi ? 3 : 0);
    EXPECT_TRUE(v.sparse.allFinite());
  }
}

TEST(Forward, MatureMatchesStraightLineComposition) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ModelSpec spec = toy(ModelKind::kMATURE);
    Forecaster f = Forecaster::build(spec, {2, 1}, seed);
    randomize(f, seed);
    std::mt19937_64 rng(seed);
    const WindowInputs in = random_inputs(rng, spec.tau, {2, 1}, 3);
    const ForecastValues v = f.predict(in);
    for (Index b = 0; b < 3; ++b) {
      const oracle::Pair ref = oracle::mature(f.parameters(), 4, 2, 3, spec.gamma, oracle::sample(in.intensive, b),
                                              oracle::sample(in.sparse, b));
      EXPECT_LE(test::max_abs_diff(v.intensive.col(b), oracle::to_matrix(ref.intensive)), 1e-13);
      EXPECT_LE(test::max_abs_diff(v.sparse.col(b), oracle::to_matrix(ref.sparse)), 1e-13);
    }
  }
}

TEST(Forward, MarnCMatchesStraightLineComposition) {
  const ModelSpec spec = toy(ModelKind::kMARNC);
  Forecaster f = Forecaster::build(spec, {2, 2}, 5);
  randomize(f, 5);
  std::mt19937_64 rng(5);
  const WindowInputs in = random_inputs(rng, spec.tau, {2, 2}, 2);
  const ForecastValues v = f.predict(in);
  const ParameterSet& p = f.parameters();
  const oracle::Marn wr = oracle::marn_from(p, "marn_R", 2, 3);
  const oracle::Marn ws = oracle::marn_from(p, "marn_S", 2, 3);
  const oracle::Mat fw = oracle::to_mat(p.at("fuse_mem.W").value);
  const oracle::Vec fb = oracle::to_vec(p.at("fuse_mem.b").value);
  for (Index b = 0; b < 2; ++b) {
    oracle::MarnState sr = oracle::marn_initial(4, 2, 3), ss = oracle::marn_initial(4, 2, 3);
    const auto xr = oracle::sample(in.intensive, b), xs = oracle::sample(in.sparse, b);
    for (std::size_t t = 0; t < xr.size(); ++t) {
      sr = oracle::marn_step(wr, sr, xr[t]);
      ss = oracle::marn_step(ws, ss, xs[t]);
      for (std::size_t k = 0; k < 2; ++k) {
        oracle::Vec row = oracle::plus(oracle::affine(fw, oracle::concat(sr.memory[k], ss.memory[k])), fb);
        for (double& x : row) x = std::tanh(x);
        ss.memory[k] = row;
      }
    }
    const oracle::Vec z = oracle::concat(sr.lstm.h, ss.lstm.h);
    EXPECT_LE(test::max_abs_diff(v.intensive.col(b), oracle::to_matrix(oracle::head(p, "head_R", z))), 1e-13);
    EXPECT_LE(test::max_abs_diff(v.sparse.col(b), oracle::to_matrix(oracle::head(p, "head_S", z))), 1e-13);
  }
}

TEST(Forward, ZeroHeadWeightsGiveBiases) {
  Forecaster f = Forecaster::build(toy(ModelKind::kMATURE), {2, 1}, 0);
  for (const char* n : {"head_R.W1", "head_R.W2", "head_S.W1", "head_S.W2"}) f.parameters().at(n).value.setZero();
  f.parameters().at("head_R.b2").value << 0.25, -1.5;
  f.parameters().at("head_S.b2").value << 3.0;
  std::mt19937_64 rng(0);
  const ForecastValues v = f.predict(random_inputs(rng, 5, {2, 1}, 3));
  for (Index b = 0; b < 3; ++b) {
    EXPECT_EQ(v.intensive(0, b), 0.25);
    EXPECT_EQ(v.intensive(1, b), -1.5);
    EXPECT_EQ(v.sparse(0, b), 3.0);
  }
}

TEST(Variants, MatureWithGammaOneEqualsMarnS) {
  ModelSpec mature = toy(ModelKind::kMATURE);
  mature.gamma = 1.0;
  ModelSpec marns = toy(ModelKind::kMARNS);
  for (std::uint64_t seed : {0u, 7u, 123u}) {
    Forecaster a = Forecaster::build(mature, {3, 2}, seed);
    Forecaster b = Forecaster::build(marns, {3, 2}, seed);
    std::mt19937_64 rng(seed);
    const WindowInputs in = random_inputs(rng, 5, {3, 2}, 4);
    const ForecastValues va = a.predict(in), vb = b.predict(in);
    EXPECT_TRUE(test::bitwise_equal(va.sparse, vb.sparse));
    EXPECT_TRUE(test::bitwise_equal(va.intensive, vb.intensive));
  }
}

TEST(Variants, MtLstmDecouplesIntoSingleTaskLstms) {
  const Index h = 4;
  Forecaster mt = Forecaster::build(toy(ModelKind::kMTLSTM), {2, 2}, 3);
  randomize(mt, 3);
  ParameterSet& p = mt.parameters();
  // Identical per-mode cells; each head sees only its own mode.
  for (const char* g : {"W_i", "W_f", "W_o", "W_cand", "U_i", "U_f", "U_o", "U_cand", "b_i", "b_f", "b_o", "b_cand"}) {
    p.at(std::string("lstm_S.") + g).value = p.at(std::string("lstm_R.") + g).value;
  }
  p.at("head_R.W1").value.rightCols(h).setZero();
  p.at("head_S.W1").value.leftCols(h).setZero();

  std::mt19937_64 rng(3);
  const WindowInputs in = random_inputs(rng, 5, {2, 2}, 3);
  const ForecastValues joint = mt.predict(in);

  for (Mode mode : {Mode::kIntensive, Mode::kSparse}) {
    ModelSpec spec = toy(ModelKind::kLSTM);
    spec.mode = mode;
    const bool r = mode == Mode::kIntensive;
    Forecaster single = Forecaster::build(spec, r ? StationCounts{2, 0} : StationCounts{0, 2}, 0);
    const std::string cell = r ? "lstm_R." : "lstm_S.";
    const std::string head = r ? "head_R." : "head_S.";
    for (Parameter& q : single.parameters()) {
      if (q.name.rfind("lstm.", 0) == 0) q.value = p.at(cell + q.name.substr(5)).value;
    }
    const Matrix w1 = p.at(head + "W1").value;
    single.parameters().at("head.W1").value = r ? Matrix(w1.leftCols(h)) : Matrix(w1.rightCols(h));
    for (const char* n : {"b1", "W2", "b2"}) single.parameters().at(std::string("head.") + n).value = p.at(head + n).value;

    WindowInputs only;
    (r ? only.intensive : only.sparse) = r ? in.intensive : in.sparse;
    const ForecastValues v = single.predict(only);
    EXPECT_LE(test::max_abs_diff(r ? v.intensive : v.sparse, r ? joint.intensive : joint.sparse), 1e-15);
  }
}

TEST(Variants, CLstmConsumesBothModesInOneCell) {
  const Forecaster f = Forecaster::build(toy(ModelKind::kCLSTM), {3, 2}, 0);
  EXPECT_EQ(f.parameters().at("lstm.W_i").value.cols(), 5);
  EXPECT_EQ(f.parameters().at("head_R.W1").value.cols(), 4);
  EXPECT_EQ(f.parameters().at("head_S.W1").value.cols(), 4);
  EXPECT_FALSE(f.parameters().contains("lstm_R.W_i"));
}

TEST(Mlp, CountAndZeroWeights) {
  ModelSpec spec = toy(ModelKind::kMLP);
  Forecaster f = Forecaster::build(spec, {0, 2}, 0);
  const std::size_t in = 5 * 2;
  EXPECT_EQ(f.parameters().scalar_count(), in * 8 + 8 + 8 * 6 + 6 + 6 * 2 + 2);
  for (Parameter& q : f.parameters()) q.value.setZero();
  f.parameters().at("mlp.out.b").value << 1.25, -0.5;
  std::mt19937_64 rng(0);
  const ForecastValues v = f.predict(random_inputs(rng, 5, {0, 2}, 3));
  for (Index b = 0; b < 3; ++b) {
    EXPECT_EQ(v.sparse(0, b), 1.25);
    EXPECT_EQ(v.sparse(1, b), -0.5);
  }
}

TEST(HistoricalAverageTest, HandExamples) {
  Matrix two_days = Matrix::Zero(48, 1);
  two_days(9, 0) = 2.0;
  two_days(33, 0) = 4.0;
  EXPECT_DOUBLE_EQ(HistoricalAverage::fit(two_days, 0, 24).predict(9)(0), 3.0);

  EXPECT_DOUBLE_EQ(HistoricalAverage::fit(Matrix::Constant(72, 2, 6.5), 0, 24).predict(17)(1), 6.5);

  Matrix three = Matrix::Zero(72, 1);
  three(5, 0) = 1.0;
  three(29, 0) = 2.0;
  three(53, 0) = 6.0;
  EXPECT_DOUBLE_EQ(HistoricalAverage::fit(three, 0, 24).predict(5)(0), 3.0);
}

TEST(HistoricalAverageTest, SlotOffsetAndEmptyHistory) {
  Matrix v(4, 1);
  v << 1, 2, 3, 4;  // rows start at slot 1 of a 2-slot day: slots 1,0,1,0
  const HistoricalAverage ha = HistoricalAverage::fit(v, 1, 2);
  EXPECT_DOUBLE_EQ(ha.predict(0)(0), 3.0);
  EXPECT_DOUBLE_EQ(ha.predict(1)(0), 2.0);
  EXPECT_THROW(HistoricalAverage::fit(Matrix(0, 1), 0, 24), ContractError);
  EXPECT_THROW(HistoricalAverage::fit(Matrix::Ones(5, 1), 0, 24), ContractError);
}

TEST(LinearBaselineTest, RecoversNoiselessLinearMap) {
  std::mt19937_64 rng(17);
  const Matrix x = random_matrix(rng, 60, 6);
  const Matrix a = random_matrix(rng, 6, 2, -2, 2);
  const Matrix c = random_matrix(rng, 1, 2);
  const Matrix y = (x * a).rowwise() + c.row(0);
  const LinearBaseline lr = LinearBaseline::fit(x, y);
  EXPECT_FALSE(lr.used_ridge());
  EXPECT_LE(test::max_abs_diff(lr.coefficients().topRows(6), a), 1e-8);
  EXPECT_LE(test::max_abs_diff(lr.coefficients().bottomRows(1), c), 1e-8);
  EXPECT_LE(test::max_abs_diff(lr.predict(x), y), 1e-8);
}

TEST(LinearBaselineTest, ConstantTargetIsInterceptOnly) {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(rng, 30, 4);
  const LinearBaseline lr = LinearBaseline::fit(x, Matrix::Constant(30, 1, 4.5));
  EXPECT_LE(lr.coefficients().topRows(4).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(lr.coefficients()(4, 0), 4.5, 1e-10);
}

TEST(LinearBaselineTest, SingleSampleTakesRidgePath) {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 1, 20);
  const LinearBaseline lr = LinearBaseline::fit(x, Matrix::Constant(1, 1, 2.0));
  EXPECT_TRUE(lr.used_ridge());
  const Matrix out = lr.predict(random_matrix(rng, 5, 20));
  EXPECT_TRUE(out.allFinite());
}
