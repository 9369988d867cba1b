#include <cmath>

#include "mature/adaption.hpp"
#include "mature/model.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace mature;
using mature::test::random_matrix;

namespace {

ParameterSet random_adaption(std::uint64_t seed, MemoryShape shape, Index align_dim) {
  ParameterSet p;
  add_adaption_parameters(p, seed, "ad", shape, align_dim);
  std::mt19937_64 rng(seed + 3);
  for (Parameter& q : p) q.value = random_matrix(rng, q.value.rows(), q.value.cols());
  return p;
}

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(AlignScore, ZeroWeightsGiveZero) {
  const MemoryShape shape{2, 3};
  std::mt19937_64 rng(1);
  const Matrix r = random_matrix(rng, 3, 1), s = random_matrix(rng, 3, 1);
  for (const char* zeroed : {"ad.v", "ad.W_g"}) {
    ParameterSet p = random_adaption(1, shape, 4);
    p.at(zeroed).value.setZero();
    Tape t;
    const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.5);
    EXPECT_EQ(align_score(t.constant(r), t.constant(s), w).value()(0, 0), 0.0) << zeroed;
  }
}

TEST(AlignScore, MatchesScalarReference) {
  const MemoryShape shape{3, 4};
  ParameterSet p = random_adaption(0, shape, 5);
  const oracle::Adaption ref = oracle::adaption_from(p, "ad", 0.5);
  std::mt19937_64 rng(0);
  const Matrix mr = random_matrix(rng, 12, 2), ms = random_matrix(rng, 12, 2);
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.5);
  const Matrix scores = align_scores(t.constant(mr), t.constant(ms), w).value();
  ASSERT_EQ(scores.rows(), 3);
  ASSERT_EQ(scores.cols(), 2);
  for (Index b = 0; b < 2; ++b) {
    const oracle::Mat rr = oracle::to_mat(segment_view(mr.col(b), 3));
    const oracle::Mat rs = oracle::to_mat(segment_view(ms.col(b), 3));
    for (Index k = 0; k < 3; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double expect = oracle::align(ref, rr[kk], rs[kk]);
      EXPECT_NEAR(scores(k, b), expect, 1e-14);
      const Matrix row_r = segment_view(mr.col(b), 3).row(k).transpose();
      const Matrix row_s = segment_view(ms.col(b), 3).row(k).transpose();
      EXPECT_NEAR(align_score(t.constant(row_r), t.constant(row_s), w).value()(0, 0), expect, 1e-14);
    }
  }
}

TEST(AdaptionWeights, ZeroScoreVectorIsUniform) {
  const MemoryShape shape{4, 3};
  ParameterSet p = random_adaption(2, shape, 3);
  p.at("ad.v").value.setZero();
  std::mt19937_64 rng(2);
  Tape t;
  const Matrix beta = adaption_weights(t.constant(random_matrix(rng, 12, 1)), t.constant(random_matrix(rng, 12, 1)),
                                       bind_adaption(t, p, "ad", shape, 0.3))
                          .value();
  for (Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(beta(k, 0), 0.25);
}

TEST(AdaptionWeights, EngineeredSegmentScoresTen) {
  const MemoryShape shape{3, 1};
  ParameterSet p;
  add_adaption_parameters(p, 0, "ad", shape, 1);
  p.at("ad.W_g").value = (Matrix(1, 2) << 1.0, 0.0).finished();
  p.at("ad.v").value = Matrix::Constant(1, 1, 10.0 / std::tanh(1.0));
  Tape t;
  const Matrix beta = adaption_weights(t.constant(col({1, 0, 0})), t.constant(col({0, 0, 0})),
                                       bind_adaption(t, p, "ad", shape, 0.3))
                          .value();
  const double z = std::exp(10.0) + 2.0;
  EXPECT_NEAR(beta(0, 0), std::exp(10.0) / z, 1e-14);
  EXPECT_NEAR(beta(1, 0), 1.0 / z, 1e-14);
  EXPECT_NEAR(beta(2, 0), 1.0 / z, 1e-14);
}

TEST(AdaptionWeights, SymmetricInputsGiveUniform) {
  const MemoryShape shape{3, 2};
  ParameterSet p = random_adaption(4, shape, 2);
  // Same row in every segment and the same memory for both modes.
  const Matrix m = flatten_segments((Matrix(3, 2) << 0.4, -0.2, 0.4, -0.2, 0.4, -0.2).finished());
  Tape t;
  const Matrix beta = adaption_weights(t.constant(m), t.constant(m), bind_adaption(t, p, "ad", shape, 0.3)).value();
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(beta(k, 0), 1.0 / 3.0, 1e-15);
}

TEST(AdaptionWeights, SumToOne) {
  const MemoryShape shape{5, 3};
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterSet p = random_adaption(seed, shape, 4);
    Tape t;
    const Matrix beta = adaption_weights(t.constant(random_matrix(rng, 15, 3, -2, 2)),
                                         t.constant(random_matrix(rng, 15, 3, -2, 2)), bind_adaption(t, p, "ad", shape, 0.3))
                            .value();
    for (Index b = 0; b < 3; ++b) EXPECT_NEAR(beta.col(b).sum(), 1.0, 1e-12);
  }
}

TEST(UpdateGates, ZeroWeightsFixedPoint) {
  const MemoryShape shape{2, 3};
  ParameterSet p = random_adaption(0, shape, 3);
  for (const char* n : {"ad.W_b", "ad.W_l", "ad.b_b", "ad.b_l"}) p.at(n).value.setZero();
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.3);
  AdaptionState s = adaption_initial_state(t, shape);
  for (int i = 0; i < 5; ++i) {
    s = update_gates(s, w);
    EXPECT_TRUE(s.boost.value().isZero());
    EXPECT_TRUE(s.eliminate.value().isApprox(Matrix::Constant(3, 1, 0.5)));
  }
}

TEST(UpdateGates, IdentityBoostClosedForm) {
  const MemoryShape shape{2, 3};
  ParameterSet p = random_adaption(0, shape, 3);
  p.at("ad.W_b").value = Matrix::Identity(3, 3);
  p.at("ad.b_b").value.setConstant(std::atanh(0.3));
  Tape t;
  const AdaptionState s = update_gates(adaption_initial_state(t, shape), bind_adaption(t, p, "ad", shape, 0.3));
  EXPECT_LE((s.boost.value().array() - 0.3).abs().maxCoeff(), 1e-15);
}

TEST(UpdateGates, ThreeIterationsMatchReferenceAndStayInRange) {
  const MemoryShape shape{2, 4};
  ParameterSet p = random_adaption(0, shape, 3);
  const oracle::Adaption ref = oracle::adaption_from(p, "ad", 0.3);
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.3);
  AdaptionState s = adaption_initial_state(t, shape);
  oracle::AdaptionState r = oracle::adaption_initial(4);
  for (int i = 0; i < 3; ++i) {
    s = update_gates(s, w);
    r = oracle::update_gates(ref, r);
    EXPECT_LE(test::max_abs_diff(s.boost.value(), oracle::to_matrix(r.boost)), 1e-15);
    EXPECT_LE(test::max_abs_diff(s.eliminate.value(), oracle::to_matrix(r.eliminate)), 1e-15);
    EXPECT_LT(s.boost.value().cwiseAbs().maxCoeff(), 1.0);
    EXPECT_GT(s.eliminate.value().minCoeff(), 0.0);
    EXPECT_LT(s.eliminate.value().maxCoeff(), 1.0);
  }
}

TEST(AdaptMemory, GammaOneKeepsSparseMemoryExactly) {
  const MemoryShape shape{3, 4};
  ParameterSet p = random_adaption(1, shape, 4);
  std::mt19937_64 rng(1);
  const Matrix mr = random_matrix(rng, 12, 2), ms = random_matrix(rng, 12, 2);
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 1.0);
  const AdaptionState s = update_gates(adaption_initial_state(t, shape), w);
  Var beta = adaption_weights(t.constant(mr), t.constant(ms), w);
  EXPECT_TRUE(test::exactly_equal(adapt_memory(t.constant(mr), t.constant(ms), s, beta, w).value(), ms));
}

TEST(AdaptMemory, GammaZeroReplacesSelectedRow) {
  const MemoryShape shape{3, 2};
  ParameterSet p = random_adaption(1, shape, 2);
  std::mt19937_64 rng(3);
  const Matrix mr = random_matrix(rng, 6, 1), ms = random_matrix(rng, 6, 1);
  const Matrix v = col({0.6, -0.1});
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.0);
  const AdaptionState s{t.constant(v), t.constant(Matrix::Ones(2, 1))};
  const Matrix out = adapt_memory(t.constant(mr), t.constant(ms), s, t.constant(col({0, 0, 1})), w).value();
  const Matrix expect = segment_view(mr, 3);
  const Matrix got = segment_view(out, 3);
  EXPECT_TRUE(test::exactly_equal(got.topRows(2), expect.topRows(2)));
  EXPECT_TRUE(got.row(2).isApprox(v.transpose()));
}

TEST(AdaptMemory, MidpointBlend) {
  const MemoryShape shape{1, 1};
  ParameterSet p = random_adaption(0, shape, 1);
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.5);
  // beta = 1 and l = 1 make the candidate equal to the boost vector, 4.
  const AdaptionState s{t.constant(Matrix::Constant(1, 1, 4.0)), t.constant(Matrix::Ones(1, 1))};
  Var cand = adapted_candidate(t.constant(Matrix::Constant(1, 1, 9.0)), s, t.constant(Matrix::Ones(1, 1)));
  EXPECT_DOUBLE_EQ(cand.value()(0, 0), 4.0);
  const Matrix out = adapt_memory(t.constant(Matrix::Constant(1, 1, 9.0)), t.constant(Matrix::Constant(1, 1, 2.0)),
                                  s, t.constant(Matrix::Ones(1, 1)), w)
                         .value();
  EXPECT_DOUBLE_EQ(out(0, 0), 3.0);
}

TEST(AdaptMemory, AffineInGamma) {
  const MemoryShape shape{4, 3};
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterSet p = random_adaption(seed, shape, 3);
    const Matrix mr = random_matrix(rng, 12, 2), ms = random_matrix(rng, 12, 2);
    auto at = [&](double gamma) {
      Tape t;
      const AdaptionWeights w = bind_adaption(t, p, "ad", shape, gamma);
      const AdaptionState s = update_gates(adaption_initial_state(t, shape), w);
      Var beta = adaption_weights(t.constant(mr), t.constant(ms), w);
      return Matrix(adapt_memory(t.constant(mr), t.constant(ms), s, beta, w).value());
    };
    const Matrix m0 = at(0.0), mh = at(0.5), m1 = at(1.0);
    EXPECT_TRUE(test::exactly_equal(mh, (0.5 * m0 + 0.5 * m1).eval()));
  }
}

TEST(AdaptMemory, MatchesScalarReference) {
  const MemoryShape shape{3, 4};
  ParameterSet p = random_adaption(0, shape, 5);
  const oracle::Adaption ref = oracle::adaption_from(p, "ad", 0.3);
  std::mt19937_64 rng(0);
  const Matrix mr = random_matrix(rng, 12, 1), ms = random_matrix(rng, 12, 1);
  Tape t;
  const AdaptionWeights w = bind_adaption(t, p, "ad", shape, 0.3);
  const AdaptionState s = update_gates(adaption_initial_state(t, shape), w);
  Var beta = adaption_weights(t.constant(mr), t.constant(ms), w);
  const Matrix out = adapt_memory(t.constant(mr), t.constant(ms), s, beta, w).value();

  const oracle::Mat rr = oracle::to_mat(segment_view(mr, 3)), rs = oracle::to_mat(segment_view(ms, 3));
  const oracle::Mat expect =
      oracle::adapt(ref, rr, rs, oracle::update_gates(ref, oracle::adaption_initial(4)), oracle::beta(ref, rr, rs));
  EXPECT_LE(test::max_abs_diff(segment_view(out, 3), oracle::to_matrix(expect)), 1e-14);
}

namespace {

struct GradProbe {
  double adapt_grad = 0.0;   // largest |grad| over adapt.*
  double intensive_sensitivity = 0.0;
};

// Sparse-mode loss only; returns the adapt.* gradient magnitude and the
// finite-difference sensitivity of that loss to one intensive-cell weight.
GradProbe probe(double gamma) {
  ModelSpec spec;
  spec.kind = ModelKind::kMATURE;
  spec.hidden = 4;
  spec.tau = 4;
  spec.memory = {3, 4};
  spec.gamma = gamma;
  Forecaster f = Forecaster::build(spec, {3, 2}, 13);
  std::mt19937_64 rng(13);
  WindowInputs in;
  for (int t = 0; t < 4; ++t) {
    in.intensive.push_back(random_matrix(rng, 3, 2, 0, 1));
    in.sparse.push_back(random_matrix(rng, 2, 2, 0, 1));
  }
  const Matrix target = random_matrix(rng, 2, 2, 0, 1);
  auto sparse_loss = [&] {
    Tape t;
    return mse(f.forward(t, in).sparse, t.constant(target)).value()(0, 0);
  };
  GradProbe out;
  f.parameters().zero_grad();
  {
    Tape t;
    t.backward(mse(f.forward(t, in).sparse, t.constant(target)));
  }
  for (const Parameter& q : f.parameters()) {
    if (q.name.rfind("adapt.", 0) == 0) out.adapt_grad = std::max(out.adapt_grad, q.grad.cwiseAbs().maxCoeff());
  }
  // Perturb a weight that reaches the sparse head only through the intensive memory.
  double& w = f.parameters().at("marn_R.W_a").value(0, 0);
  const double saved = w;
  const double h = 1e-5;
  w = saved + h;
  const double up = sparse_loss();
  w = saved - h;
  const double down = sparse_loss();
  w = saved;
  out.intensive_sensitivity = std::abs(up - down) / (2 * h);
  return out;
}

}  // namespace

TEST(AdaptionGradients, ExactlyZeroAtGammaOne) {
  EXPECT_EQ(probe(1.0).adapt_grad, 0.0);
}

TEST(AdaptionGradients, FlowAtGammaBelowOne) {
  const GradProbe p = probe(0.3);
  EXPECT_GT(p.adapt_grad, 0.0);
  EXPECT_GT(p.intensive_sensitivity, 1e-8);
}

TEST(AdaptionParameters, CountMatchesFormula) {
  const MemoryShape shape{3, 5};
  ParameterSet p;
  add_adaption_parameters(p, 0, "ad", shape, 4);
  const std::size_t expected = 4 * 10 + 4 + 2 * (5 * 5 + 5);
  EXPECT_EQ(p.scalar_count(), expected);
  EXPECT_EQ(adaption_parameter_count(shape, 4), expected);
}
