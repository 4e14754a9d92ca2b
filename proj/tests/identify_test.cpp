#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "dualctl/error.hpp"
#include "dualctl/identify.hpp"

namespace dualctl {
namespace {

Eigen::MatrixXd example_A() {
  Eigen::MatrixXd A(2, 2);
  A << 0.5, 1.1, 0.0, 0.8;
  return A;
}

Dataset white_noise_data(const LTISystem& sys, int rollouts, int len, std::uint64_t seed) {
  Dataset d(sys.n_x(), sys.n_u());
  for (int i = 0; i < rollouts; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    WhiteInputController c(sys.n_x(), sys.n_u(), 1.0, GaussianStream(derive_seed({seed, k, 0})));
    d.add_rollout(simulate(sys, c, len, derive_seed({seed, k, 1})));
  }
  return d;
}

// Composite Simpson integration of the chi-square density.
double chi2_cdf_by_quadrature(int dof, double x) {
  const double k = dof / 2.0;
  const double norm = std::pow(2.0, k) * std::tgamma(k);
  auto pdf = [&](double t) { return t <= 0 ? (dof == 2 ? 0.5 : 0.0) : std::pow(t, k - 1) * std::exp(-t / 2) / norm; };
  const int n = 200000;
  const double h = x / n;
  double s = pdf(0) + pdf(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return s * h / 3;
}

TEST(LeastSquares, NoiselessScalarIsExact) {
  Trajectory tr;
  const double a = 0.9, b = 1.0;
  const double inputs[] = {1.0, -1.0, 2.0};
  double x = 0.3;
  for (double u : inputs) {
    tr.states.push_back(Eigen::VectorXd::Constant(1, x));
    tr.inputs.push_back(Eigen::VectorXd::Constant(1, u));
    x = a * x + b * u;
  }
  tr.states.push_back(Eigen::VectorXd::Constant(1, x));
  tr.inputs.push_back(Eigen::VectorXd::Zero(1));
  Dataset d(1, 1);
  d.add_rollout(tr);
  const LeastSquaresFit fit = least_squares(d);
  EXPECT_NEAR(fit.A_hat(0, 0), a, 1e-10);
  EXPECT_NEAR(fit.B_hat(0, 0), b, 1e-10);
}

TEST(LeastSquares, SingleTransitionIsUnderdetermined) {
  Trajectory tr;
  tr.states = {Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)};
  tr.inputs = {Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)};
  Dataset d(1, 1);
  d.add_rollout(tr);
  try {
    least_squares(d);
    FAIL() << "expected UnderdeterminedData";
  } catch (const UnderdeterminedData& e) {
    EXPECT_EQ(e.rank(), 1);
    EXPECT_EQ(e.required(), 2);
  }
}

TEST(LeastSquares, LongWhiteNoiseRunIsAccurate) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const LeastSquaresFit fit = least_squares(white_noise_data(sys, 1, 10001, seed));
    Eigen::MatrixXd err(2, 4);
    err << fit.A_hat - sys.A, fit.B_hat - sys.B;
    if (err.norm() < 0.1) ++good;
  }
  EXPECT_GE(good, 99);
}

TEST(ChiSquareQuantile, Examples) {
  EXPECT_NEAR(chi_square_quantile(2, 0.9), -2.0 * std::log(0.1), 1e-9);
  const double c8 = chi_square_quantile(8, 0.9);
  EXPECT_NEAR(chi2_cdf_by_quadrature(8, c8), 0.9, 1e-8);
  EXPECT_NEAR(c8, 13.3616, 1e-4);
  EXPECT_LT(chi_square_quantile(5, 1e-12), 1e-3);
  EXPECT_THROW(chi_square_quantile(3, 0.0), ContractViolation);
  EXPECT_THROW(chi_square_quantile(3, 1.0), ContractViolation);
  EXPECT_THROW(chi_square_quantile(0, 0.5), ContractViolation);
}

TEST(BuildModel, SinglePairGram) {
  Trajectory tr;
  tr.states = {Eigen::Vector2d(1, 0), Eigen::Vector2d(0.5, 0)};
  tr.inputs = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  Dataset d(2, 2);
  d.add_rollout(tr);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
  expected(0, 0) = 1.0;
  EXPECT_EQ(d.gram(), expected);
  // One pair cannot determine (A, B), so no model is built from it.
  EXPECT_THROW(build_model(d, 1.0, 0.1), UnderdeterminedData);
}

TEST(BuildModel, ScalesGramByChiSquare) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Dataset d = white_noise_data(sys, 10, 6, 4);
  const Model m = build_model(d, 2.0, 0.1);
  EXPECT_NEAR(m.c_delta, chi_square_quantile(8, 0.9), 1e-12);
  EXPECT_LT((m.D - d.gram() / (4.0 * m.c_delta)).norm(), 1e-12 * m.D.norm());
  const Model lit = build_model(d, 2.0, 0.1, ChiSquareConvention::kLiteral);
  EXPECT_NEAR(lit.c_delta, chi_square_quantile(8, 0.1), 1e-12);
}

TEST(BuildModel, DuplicatingRolloutsDoublesD) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Dataset d = white_noise_data(sys, 5, 6, 9);
  const Model m1 = build_model(d, 1.0, 0.1);
  const Model m2 = build_model(merge(d, d), 1.0, 0.1);
  EXPECT_LT((m2.D - 2 * m1.D).norm(), 1e-12 * m1.D.norm());
  EXPECT_LT((m2.A_hat - m1.A_hat).norm(), 1e-10);
  EXPECT_LT((m2.B_hat - m1.B_hat).norm(), 1e-10);
}

TEST(BuildModel, DIsSymmetricPsdAndMonotone) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  Dataset d = white_noise_data(sys, 3, 6, 1);
  Eigen::MatrixXd prev = build_model(d, 1.0, 0.1).D;
  for (std::uint64_t s = 2; s < 12; ++s) {
    d = merge(d, white_noise_data(sys, 1, 4, s));
    const Eigen::MatrixXd D = build_model(d, 1.0, 0.1).D;
    EXPECT_EQ(D, D.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D), diff(D - prev);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_GE(diff.eigenvalues().minCoeff(), -1e-10);
    prev = D;
  }
}

TEST(CredibilityRegion, CenterAndDegenerate) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  Model m = build_model(white_noise_data(sys, 10, 6, 2), 1.0, 0.1);
  EXPECT_TRUE(in_credibility_region(m, m.A_hat, m.B_hat));
  m.D.setZero();
  EXPECT_TRUE(in_credibility_region(m, 100 * Eigen::MatrixXd::Ones(2, 2), -50 * Eigen::MatrixXd::Ones(2, 2)));
}

TEST(CredibilityRegion, SymmetricAboutEstimate) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Model m = build_model(white_noise_data(sys, 10, 6, 3), 1.0, 0.1);
  GaussianStream g(12);
  for (int i = 0; i < 200; ++i) {
    const double scale = 0.05 * (1 + i % 10);
    const Eigen::MatrixXd dA = scale * Eigen::Map<const Eigen::MatrixXd>(g.vector(4).data(), 2, 2);
    const Eigen::MatrixXd dB = scale * Eigen::Map<const Eigen::MatrixXd>(g.vector(4).data(), 2, 2);
    EXPECT_EQ(in_credibility_region(m, m.A_hat + dA, m.B_hat + dB),
              in_credibility_region(m, m.A_hat - dA, m.B_hat - dB));
  }
}

TEST(CredibilityRegion, CoverageAtNinetyPercent) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  int covered = 0;
  const int trials = 500;
  for (int i = 0; i < trials; ++i) {
    const Model m = build_model(white_noise_data(sys, 10, 6, 1000 + i), 1.0, 0.1);
    if (in_credibility_region(m, sys.A, sys.B)) ++covered;
  }
  EXPECT_GE(static_cast<double>(covered) / trials, 0.87);
}

TEST(Merge, PairsAddAndEmptyIsIdentity) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Dataset d1 = white_noise_data(sys, 4, 6, 5), d2 = white_noise_data(sys, 3, 9, 6);
  const Dataset m = merge(d1, d2);
  EXPECT_EQ(m.num_pairs(), d1.num_pairs() + d2.num_pairs());
  EXPECT_EQ(m.num_pairs(), 4 * 5 + 3 * 8);
  EXPECT_LT((m.gram() - d1.gram() - d2.gram()).norm(), 1e-12 * m.gram().norm());
  const Dataset same = merge(d1, Dataset(2, 2));
  EXPECT_EQ(same.gram(), d1.gram());
  EXPECT_EQ(same.regressors(), d1.regressors());
  EXPECT_EQ(same.targets(), d1.targets());
  EXPECT_THROW(merge(d1, Dataset(2, 1)), ContractViolation);
}

TEST(DatasetCsv, RoundTripIsExact) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Dataset d = white_noise_data(sys, 3, 5, 8);
  std::stringstream ss;
  write_dataset_csv(d, ss);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.regressors(), d.regressors());
  EXPECT_EQ(back.targets(), d.targets());
  EXPECT_EQ(back.rollouts().size(), d.rollouts().size());
}

TEST(DatasetCsv, RejectsMalformedInput) {
  std::stringstream bad_header("rollout,t,x_1\n");
  EXPECT_THROW(read_dataset_csv(bad_header), ValidationError);
  std::stringstream bad_value("rollout_id,t,x_1,u_1\n0,1,abc,0\n");
  EXPECT_THROW(read_dataset_csv(bad_value), ValidationError);
}

}  // namespace
}  // namespace dualctl
