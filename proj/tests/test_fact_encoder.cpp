#include "lexprompt/fact_encoder.h"
#include "lexprompt/gradcheck.h"

#include <gtest/gtest.h>

#include <cmath>

namespace lexprompt {
namespace {

GruDirection zero_direction(int input, int hidden) {
  GruDirection d;
  for (Param* p : {&d.w_z, &d.w_r, &d.w_h}) *p = Param(hidden, input + hidden);
  for (Param* p : {&d.b_z, &d.b_r, &d.b_h}) *p = Param(hidden, 1);
  return d;
}

// Scalar loops straight from the gate equations.
Vec reference_cell(const Vec& x, const Vec& h, const GruDirection& p) {
  const int n_in = static_cast<int>(x.size());
  const int n_h = static_cast<int>(h.size());
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> z(n_h), r(n_h);
  for (int i = 0; i < n_h; ++i) {
    double az = p.b_z.value(i, 0), ar = p.b_r.value(i, 0);
    for (int j = 0; j < n_in; ++j) {
      az += p.w_z.value(i, j) * x(j);
      ar += p.w_r.value(i, j) * x(j);
    }
    for (int j = 0; j < n_h; ++j) {
      az += p.w_z.value(i, n_in + j) * h(j);
      ar += p.w_r.value(i, n_in + j) * h(j);
    }
    z[i] = sig(az);
    r[i] = sig(ar);
  }
  Vec out(n_h);
  for (int i = 0; i < n_h; ++i) {
    double ac = p.b_h.value(i, 0);
    for (int j = 0; j < n_in; ++j) ac += p.w_h.value(i, j) * x(j);
    for (int j = 0; j < n_h; ++j) ac += p.w_h.value(i, n_in + j) * r[j] * h(j);
    out(i) = (1 - z[i]) * h(i) + z[i] * std::tanh(ac);
  }
  return out;
}

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-scale, scale);
  return v;
}

TEST(GruCell, ZeroParamsGiveZeroState) {
  const GruDirection p = zero_direction(3, 4);
  Vec x(3);
  x << 1, -2, 3;
  GruStep step;
  EXPECT_EQ(gru_cell(x, Vec::Zero(4), p, &step), Vec::Zero(4));
  EXPECT_TRUE(step.z.isApprox(Vec::Constant(4, 0.5)));
}

TEST(GruCell, ClosedUpdateGateKeepsZeroState) {
  Rng rng(2);
  GruDirection p = zero_direction(3, 4);
  p.w_h.init_uniform(rng, 1.0);
  p.b_h.init_uniform(rng, 1.0);
  p.b_z.value.setConstant(-50.0);
  EXPECT_LT(gru_cell(random_vec(rng, 3), Vec::Zero(4), p).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(GruCell, MatchesScalarReference) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const int n_in = 1 + static_cast<int>(rng.below(6));
    const int n_h = 1 + static_cast<int>(rng.below(6));
    GruParams params(n_in, n_h, seed);
    for (auto& np : params.parameters()) np.param->init_uniform(rng, 1.0);
    const Vec x = random_vec(rng, n_in);
    const Vec h = random_vec(rng, n_h);
    const Vec got = gru_cell(x, h, params.forward);
    const Vec want = reference_cell(x, h, params.forward);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(GruCell, DimensionMismatchThrows) {
  const GruParams params(3, 2, 1);
  EXPECT_THROW(gru_cell(Vec::Zero(2), Vec::Zero(2), params.forward), std::invalid_argument);
  EXPECT_THROW(gru_cell(Vec::Zero(3), Vec::Zero(3), params.forward), std::invalid_argument);
}

Vocab letters_vocab() {
  Dataset d;
  d.verbalizer = Verbalizer({{0, "abc,"}});
  return build_vocab(d, 1);
}

TEST(FactsToInputs, Examples) {
  const Vocab v = letters_vocab();
  Mat table(static_cast<Eigen::Index>(v.size()), 2);
  for (Eigen::Index i = 0; i < table.rows(); ++i) table.row(i) << static_cast<double>(i), -static_cast<double>(i);
  EXPECT_EQ(facts_to_inputs(FactList{}, v, table, 64).rows(), 0);

  const FactList f{{"ab", "c"}};
  const Mat in = facts_to_inputs(f, v, table, 64);
  ASSERT_EQ(in.rows(), 4);
  EXPECT_EQ(in(0, 0), v.id("a"));
  EXPECT_EQ(in(2, 0), v.id(","));
  EXPECT_EQ(in(3, 1), -v.id("c"));
  EXPECT_EQ(facts_to_inputs(f, v, table, 2).rows(), 2);
}

TEST(EncodeFacts, EmptyInputGivesZeroVector) {
  const GruParams params(4, 3, 1);
  EXPECT_EQ(encode_facts(params, Mat(0, 4)), Vec::Zero(6));
}

TEST(EncodeFacts, LengthOneConcatenatesBothCells) {
  const GruParams params(4, 3, 9);
  Rng rng(1);
  const Vec x = random_vec(rng, 4);
  Mat in(1, 4);
  in.row(0) = x.transpose();
  const Vec u = encode_facts(params, in);
  ASSERT_EQ(u.size(), 6);
  EXPECT_TRUE(u.head(3).isApprox(gru_cell(x, Vec::Zero(3), params.forward)));
  EXPECT_TRUE(u.tail(3).isApprox(gru_cell(x, Vec::Zero(3), params.backward)));
}

TEST(EncodeFacts, ReversalWithSwappedDirectionsSwapsHalves) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int n_in = 1 + static_cast<int>(rng.below(5));
    const int n_h = 1 + static_cast<int>(rng.below(5));
    const Eigen::Index len = static_cast<Eigen::Index>(rng.below(8));
    GruParams params(n_in, n_h, seed);
    for (auto& np : params.parameters()) np.param->init_uniform(rng, 0.8);
    Mat in(len, n_in);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.uniform(-1, 1);
    const Mat reversed = in.colwise().reverse();
    GruParams swapped = params;
    std::swap(swapped.forward, swapped.backward);
    const Vec u = encode_facts(params, in);
    const Vec v = encode_facts(swapped, reversed);
    ASSERT_EQ(u.size(), 2 * n_h);
    EXPECT_TRUE(u.head(n_h).isApprox(v.tail(n_h), 1e-13) || len == 0);
    EXPECT_TRUE(u.tail(n_h).isApprox(v.head(n_h), 1e-13) || len == 0);
  }
}

TEST(EncodeFacts, SquaredNormGradientMatchesCentralDifferences) {
  for (Eigen::Index len = 1; len <= 6; ++len) {
    Rng rng(static_cast<std::uint64_t>(len));
    GruParams params(3, 4, 7 + static_cast<std::uint64_t>(len));
    for (auto& np : params.parameters()) np.param->init_uniform(rng, 0.8);
    Mat in(len, 3);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.uniform(-1, 1);

    for (auto& np : params.parameters()) np.param->zero_grad();
    FactEncoderTrace trace;
    const Vec u = encode_facts(params, in, &trace);
    encode_facts_backward(params, trace, 2.0 * u);

    const auto loss = [&] { return encode_facts(params, in).squaredNorm(); };
    for (auto& np : params.parameters()) {
      const Mat analytic = np.param->grad;
      const GradCheckResult r = check_param("gru", np, analytic, loss, 1e-5);
      EXPECT_LT(r.max_rel_error, 1e-4) << np.name << " len " << len;
    }
  }
}

TEST(FactTokens, JoinedAndTruncated) {
  const Vocab v = letters_vocab();
  EXPECT_EQ(fact_tokens(FactList{{"ab", "c"}}, v, 64), tokenize(v, "ab,c"));
  EXPECT_EQ(fact_tokens(FactList{{"ab", "c"}}, v, 3).size(), 3u);
}

}  // namespace
}  // namespace lexprompt
