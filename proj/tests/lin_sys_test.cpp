#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dualctl/error.hpp"
#include "dualctl/lin_sys.hpp"

namespace dualctl {
namespace {

Eigen::MatrixXd example_A() {
  Eigen::MatrixXd A(2, 2);
  A << 0.5, 1.1, 0.0, 0.8;
  return A;
}

// Vectorized Lyapunov solve: (I - A kron A) vec(S) = vec(W).
Eigen::MatrixXd kron_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W) {
  const int n = static_cast<int>(A.rows());
  Eigen::MatrixXd K(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K.block(i * n, j * n, n, n) = A(i, j) * A;
  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n * n, n * n) - K;
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(W.data(), n * n);
  const Eigen::VectorXd s = M.fullPivLu().solve(w);
  return Eigen::Map<const Eigen::MatrixXd>(s.data(), n, n);
}

// Random FIR that satisfies the nominal closed-loop recursion exactly for
// an invertible square B.
FIRPair feasible_fir(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int F, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const int n = static_cast<int>(A.rows());
  FIRPair phi = FIRPair::zeros(n, n, F);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k + 1 < F; ++k) {
    phi.phi_u[k] = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return 0.3 * g(rng); });
    phi.phi_x[k + 1] = A * phi.phi_x[k] + B * phi.phi_u[k];
  }
  phi.phi_u[F - 1] = -B.inverse() * A * phi.phi_x[F - 1];
  return phi;
}

TEST(Simulate, ZeroNoiseZeroControlStaysAtOrigin) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 0.0);
  ZeroController c(2, 2);
  const Trajectory tr = simulate(sys, c, 25, 7);
  ASSERT_EQ(tr.length(), 25);
  for (int t = 0; t < 25; ++t) {
    EXPECT_EQ(tr.states[t].norm(), 0.0);
    EXPECT_EQ(tr.inputs[t].norm(), 0.0);
  }
}

TEST(Simulate, EmpiricalCovarianceMatchesLyapunov) {
  const Eigen::MatrixXd A = example_A();
  LTISystem sys(A, Eigen::MatrixXd::Identity(2, 2), 1.0);
  ZeroController c(2, 2);
  const int N = 100000;
  const Trajectory tr = simulate(sys, c, N, 11);
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  const int burn = 100;
  for (int t = burn; t < N; ++t) S += tr.states[t] * tr.states[t].transpose();
  S /= (N - burn);
  const Eigen::MatrixXd Sigma = kron_lyapunov(A, Eigen::MatrixXd::Identity(2, 2));
  EXPECT_LT((S - Sigma).norm() / Sigma.norm(), 0.05);
}

TEST(Simulate, SameSeedSameTrajectory) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  WhiteInputController c1(2, 2, 1.0, GaussianStream(3)), c2(2, 2, 1.0, GaussianStream(3));
  const Trajectory a = simulate(sys, c1, 50, 99), b = simulate(sys, c2, 50, 99);
  for (int t = 0; t < 50; ++t) {
    EXPECT_EQ(a.states[t], b.states[t]);
    EXPECT_EQ(a.inputs[t], b.inputs[t]);
  }
}

TEST(EvaluateCost, OnesTrajectory) {
  Trajectory tr;
  for (int t = 0; t < 5; ++t) {
    tr.states.push_back(Eigen::VectorXd::Ones(2));
    tr.inputs.push_back(Eigen::VectorXd::Ones(2));
  }
  const CostWeights w(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_DOUBLE_EQ(evaluate_cost(tr, w, 2, 4), 12.0);
  const CostWeights zero(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2));
  EXPECT_EQ(evaluate_cost(tr, zero, 1, 5), 0.0);
}

TEST(EvaluateCost, QuadraticHomogeneity) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  WhiteInputController c(2, 2, 1.0, GaussianStream(5));
  Trajectory tr = simulate(sys, c, 30, 6);
  const CostWeights w(Eigen::Vector2d(1, 0.001).asDiagonal(), 1000 * Eigen::MatrixXd::Identity(2, 2));
  const double base = evaluate_cost(tr, w, 1, 30);
  for (auto& x : tr.states) x *= 2;
  for (auto& u : tr.inputs) u *= 2;
  EXPECT_NEAR(evaluate_cost(tr, w, 1, 30), 4 * base, 1e-9 * base);
}

TEST(EvaluateCost, BadRangeThrows) {
  Trajectory tr;
  tr.states.assign(3, Eigen::VectorXd::Zero(1));
  tr.inputs.assign(3, Eigen::VectorXd::Zero(1));
  const CostWeights w(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_THROW(evaluate_cost(tr, w, 3, 2), ContractViolation);
  EXPECT_THROW(evaluate_cost(tr, w, 0, 2), ContractViolation);
  EXPECT_THROW(evaluate_cost(tr, w, 1, 4), ContractViolation);
}

TEST(RealizeController, ZeroInputResponseGivesZeroOutput) {
  FIRPair phi = FIRPair::zeros(2, 2, 4);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(2, 2);
  phi.phi_x[1] = example_A();
  SLSController c = realize_controller(phi);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(2, [&] { return g(rng); });
    EXPECT_EQ(c.act(x).norm(), 0.0);
  }
}

TEST(RealizeController, RejectsNonIdentityFirstTap) {
  FIRPair phi = FIRPair::zeros(2, 2, 3);
  phi.phi_x[0] = 1.01 * Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(realize_controller(phi), InvalidResponse);
}

TEST(RealizeController, DisturbanceEstimatesEqualNoiseOnNominalPlant) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd A = example_A(), B = Eigen::MatrixXd::Identity(2, 2);
  const int F = 8;
  SLSController c = realize_controller(feasible_fir(A, B, F, rng));
  std::vector<Eigen::VectorXd> w;
  Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(2, [&] { return g(rng); });  // x_1 = w_0
  w.push_back(x);
  for (int t = 1; t <= F; ++t) {
    const Eigen::VectorXd u = c.act(x);
    EXPECT_LT((c.delta_history().front() - w[t - 1]).norm(), 1e-9) << "t = " << t;
    w.push_back(Eigen::VectorXd::NullaryExpr(2, [&] { return g(rng); }));
    x = A * x + B * u + w.back();
  }
}

TEST(RealizeController, ImpulseResponseReproducesTaps) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 2;
    const int F = 3 + trial;
    const Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    const Eigen::MatrixXd B =
        Eigen::MatrixXd::Identity(n, n) + 0.3 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    const FIRPair phi = feasible_fir(A, B, F, rng);
    LTISystem sys(A, B, 0.0);
    for (int j = 0; j < n; ++j) {
      SLSController c = realize_controller(phi);
      GaussianStream unused(0);
      const Rollout r = rollout(sys, c, Eigen::VectorXd::Unit(n, j), F + 3, unused);
      for (int k = 1; k <= F + 3; ++k) {
        const Eigen::VectorXd ex = k <= F ? Eigen::VectorXd(phi.phi_x[k - 1].col(j)) : Eigen::VectorXd::Zero(n);
        const Eigen::VectorXd eu = k <= F ? Eigen::VectorXd(phi.phi_u[k - 1].col(j)) : Eigen::VectorXd::Zero(n);
        EXPECT_LT((r.traj.states[k - 1] - ex).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LT((r.traj.inputs[k - 1] - eu).cwiseAbs().maxCoeff(), 1e-6);
      }
    }
  }
}

TEST(ClosedLoopMatrix, NominalPlantIsStable) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd A = example_A(), B = Eigen::MatrixXd::Identity(2, 2);
  const FIRPair phi = feasible_fir(A, B, 6, rng);
  EXPECT_LT(spectral_radius(closed_loop_matrix(A, B, phi)), 1.0);
}

TEST(ClosedLoopMatrix, ZeroFeedbackCases) {
  FIRPair phi = FIRPair::zeros(2, 2, 5);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_NEAR(spectral_radius(closed_loop_matrix(Eigen::MatrixXd::Zero(2, 2), B, phi)), 0.0, 1e-9);
  EXPECT_NEAR(spectral_radius(closed_loop_matrix(example_A(), B, phi)), 0.8, 1e-9);
}

TEST(SpectralRadius, Examples) {
  EXPECT_NEAR(spectral_radius(Eigen::MatrixXd::Identity(3, 3)), 1.0, 1e-12);
  EXPECT_NEAR(spectral_radius(example_A()), 0.8, 1e-12);
  Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 3; ++i) shift(i + 1, i) = 1.0;
  EXPECT_NEAR(spectral_radius(shift), 0.0, 1e-9);
  EXPECT_THROW(spectral_radius(Eigen::MatrixXd::Zero(2, 3)), ContractViolation);
}

TEST(StationaryCost, Examples) {
  const CostWeights I3(Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(3, 3));
  LTISystem zero(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(3, 3), 1.0);
  EXPECT_NEAR(stationary_cost_with_excitation(zero, Eigen::MatrixXd::Zero(3, 3), 0.0, I3), 3.0, 1e-10);

  LTISystem scalar(Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Ones(1, 1), 1.0);
  const CostWeights qr(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1));
  EXPECT_NEAR(stationary_cost_with_excitation(scalar, Eigen::MatrixXd::Zero(1, 1), 0.0, qr), 1.0 / 0.75, 1e-10);
}

TEST(StationaryCost, IncreasesWithExcitation) {
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const CostWeights w(Eigen::Vector2d(1, 0.001).asDiagonal(), 1000 * Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd K(2, 2);
  K << -0.2, -0.3, 0.0, -0.1;
  double prev = stationary_cost_with_excitation(sys, K, 0.0, w);
  for (double s : {0.01, 0.1, 0.5, 1.0}) {
    const double c = stationary_cost_with_excitation(sys, K, s, w);
    EXPECT_GT(c, prev);
    prev = c;
  }
}

TEST(StationaryCost, UnstableThrows) {
  LTISystem sys(Eigen::MatrixXd::Constant(1, 1, 1.2), Eigen::MatrixXd::Ones(1, 1), 1.0);
  const CostWeights w(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1));
  EXPECT_THROW(stationary_cost_with_excitation(sys, Eigen::MatrixXd::Zero(1, 1), 0.0, w), Instability);
}

TEST(StationaryCost, FirOverloadMatchesStaticGainForMemorylessResponse) {
  // One tap with A + B K = 0 realizes u = K x.
  LTISystem sys(example_A(), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const Eigen::MatrixXd K = -example_A();
  FIRPair phi = FIRPair::zeros(2, 2, 1);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(2, 2);
  phi.phi_u[0] = K;
  const CostWeights w(Eigen::Vector2d(1, 0.001).asDiagonal(), 1000 * Eigen::MatrixXd::Identity(2, 2));
  for (double s : {0.0, 0.3}) {
    EXPECT_NEAR(stationary_cost_with_excitation(sys, phi, s, w), stationary_cost_with_excitation(sys, K, s, w),
                1e-8);
  }
}

// Spectral radius of the augmented loop agrees with long-run boundedness.
TEST(ClosedLoopMatrix, StabilityMatchesSimulation) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; checked < 20 && trial < 500; ++trial) {
    const int n = 2, F = 3;
    const Eigen::MatrixXd A = 1.2 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    FIRPair phi = FIRPair::zeros(n, n, F);
    phi.phi_x[0] = Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < F; ++k) {
      if (k > 0) phi.phi_x[k] = 0.3 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
      phi.phi_u[k] = 0.5 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    }
    const double rho = spectral_radius(closed_loop_matrix(A, B, phi));
    if (std::abs(rho - 1.0) < 0.05) continue;
    ++checked;
    LTISystem sys(A, B, 1.0);
    SLSController c = realize_controller(phi);
    GaussianStream noise(derive_seed({77, static_cast<std::uint64_t>(trial)}));
    const Rollout r = rollout(sys, c, noise.vector(n), 10000, noise);
    double peak = 0.0;
    for (const auto& x : r.traj.states) peak = std::max(peak, std::isfinite(x.norm()) ? x.norm() : 1e300);
    if (rho < 1.0) {
      EXPECT_LT(peak, 1e4) << "rho = " << rho;
    } else {
      EXPECT_GT(peak, 1e6) << "rho = " << rho;
    }
  }
  EXPECT_EQ(checked, 20);
}

}  // namespace
}  // namespace dualctl
