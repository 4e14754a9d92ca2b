#include "dualctl/lin_sys.hpp"

#include <cmath>
#include <string>

#include "dualctl/error.hpp"

namespace dualctl {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

bool is_psd(const Eigen::MatrixXd& M, double tol) {
  if (M.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

FIRPair FIRPair::zeros(int n_x, int n_u, int F) {
  FIRPair phi;
  phi.phi_x.assign(F, Eigen::MatrixXd::Zero(n_x, n_x));
  phi.phi_u.assign(F, Eigen::MatrixXd::Zero(n_u, n_x));
  return phi;
}

Eigen::MatrixXd stack(const FIRPair& phi) {
  const int nx = phi.n_x(), nu = phi.n_u(), F = phi.length();
  Eigen::MatrixXd S(nx * F, nx + nu);
  for (int k = 0; k < F; ++k) {
    S.block(k * nx, 0, nx, nx) = phi.phi_x[k].transpose();
    S.block(k * nx, nx, nx, nu) = phi.phi_u[k].transpose();
  }
  return S;
}

FIRPair unstack(const Eigen::MatrixXd& stacked, int n_x, int n_u) {
  require(stacked.cols() == n_x + n_u && n_x > 0 && stacked.rows() % n_x == 0,
          "unstack: stacked response has inconsistent shape");
  const int F = static_cast<int>(stacked.rows()) / n_x;
  FIRPair phi = FIRPair::zeros(n_x, n_u, F);
  for (int k = 0; k < F; ++k) {
    phi.phi_x[k] = stacked.block(k * n_x, 0, n_x, n_x).transpose();
    phi.phi_u[k] = stacked.block(k * n_x, n_x, n_x, n_u).transpose();
  }
  return phi;
}

LTISystem::LTISystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_, double sigma_w_)
    : A(std::move(A_)), B(std::move(B_)), sigma_w(sigma_w_) {
  require(A.rows() > 0 && A.rows() == A.cols(), "LTISystem: A must be square and non-empty");
  require(B.rows() == A.rows() && B.cols() > 0, "LTISystem: B must have n_x rows");
  require(sigma_w >= 0.0 && std::isfinite(sigma_w), "LTISystem: sigma_w must be >= 0");
}

CostWeights::CostWeights(Eigen::MatrixXd Q_, Eigen::MatrixXd R_) : Q(std::move(Q_)), R(std::move(R_)) {
  require(Q.rows() == Q.cols() && R.rows() == R.cols(), "CostWeights: Q and R must be square");
  require((Q - Q.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + Q.cwiseAbs().maxCoeff()),
          "CostWeights: Q must be symmetric");
  require((R - R.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + R.cwiseAbs().maxCoeff()),
          "CostWeights: R must be symmetric");
  Q = 0.5 * (Q + Q.transpose());
  R = 0.5 * (R + R.transpose());
  require(is_psd(Q, 1e-10), "CostWeights: Q must be positive semidefinite");
  require(is_psd(R, 1e-10), "CostWeights: R must be positive semidefinite");
}

Eigen::VectorXd ExcitedController::act(const Eigen::VectorXd& x) {
  Eigen::VectorXd u = inner_->act(x);
  return u + sigma_ * stream_.vector(static_cast<int>(u.size()));
}

SLSController::SLSController(FIRPair phi) : phi_(std::move(phi)) {
  require(phi_.length() >= 1, "SLSController: empty response");
  reset();
}

void SLSController::reset() {
  ring_.assign(phi_.length() - 1, Eigen::VectorXd::Zero(phi_.n_x()));
  head_ = 0;
}

std::vector<Eigen::VectorXd> SLSController::delta_history() const {
  const int m = static_cast<int>(ring_.size());
  std::vector<Eigen::VectorXd> out;
  out.reserve(m);
  for (int j = 0; j < m; ++j) out.push_back(ring_[(head_ - j + m) % m]);
  return out;
}

Eigen::VectorXd SLSController::act(const Eigen::VectorXd& x) {
  require(x.size() == phi_.n_x(), "SLSController: state dimension mismatch");
  const int F = phi_.length();
  const int m = F - 1;
  Eigen::VectorXd delta = x;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(phi_.n_u());
  for (int k = 2; k <= F; ++k) {
    const Eigen::VectorXd& past = ring_[(head_ - (k - 2) + m) % m];
    delta.noalias() -= phi_.phi_x[k - 1] * past;
    u.noalias() += phi_.phi_u[k - 1] * past;
  }
  u.noalias() += phi_.phi_u[0] * delta;
  if (m > 0) {
    head_ = (head_ + 1) % m;
    ring_[head_] = delta;
  }
  return u;
}

Rollout rollout(const LTISystem& system, Controller& controller, const Eigen::VectorXd& first_state,
                int horizon, GaussianStream& noise) {
  require(horizon >= 1, "rollout: horizon must be positive");
  require(controller.n_x() == system.n_x() && controller.n_u() == system.n_u(),
          "rollout: controller dimensions do not match the system");
  require(first_state.size() == system.n_x(), "rollout: initial state dimension mismatch");

  Rollout out;
  out.traj.states.reserve(horizon);
  out.traj.inputs.reserve(horizon);
  Eigen::VectorXd x = first_state;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd u = controller.act(x);
    require(u.size() == system.n_u(), "rollout: controller emitted wrong input dimension");
    Eigen::VectorXd drift = system.A * x + system.B * u;
    out.traj.states.push_back(x);
    out.traj.inputs.push_back(u);
    if (t + 1 < horizon) {
      x = drift + system.sigma_w * noise.vector(system.n_x());
    } else {
      out.drift = std::move(drift);
    }
  }
  return out;
}

Trajectory simulate(const LTISystem& system, Controller& controller, int horizon,
                    std::uint64_t rng_seed) {
  GaussianStream noise(rng_seed);
  const Eigen::VectorXd x1 = system.sigma_w * noise.vector(system.n_x());
  return rollout(system, controller, x1, horizon, noise).traj;
}

double evaluate_cost(const Trajectory& traj, const CostWeights& weights, int t1, int t2) {
  require(t1 >= 1 && t1 <= t2 && t2 <= traj.length(), "evaluate_cost: invalid time range");
  require(traj.inputs.size() == traj.states.size(), "evaluate_cost: ragged trajectory");
  double total = 0.0;
  for (int t = t1; t <= t2; ++t) {
    const Eigen::VectorXd& x = traj.states[t - 1];
    const Eigen::VectorXd& u = traj.inputs[t - 1];
    total += x.dot(weights.Q * x) + u.dot(weights.R * u);
  }
  return total;
}

SLSController realize_controller(const FIRPair& phi, double tol) {
  require(phi.length() >= 1, "realize_controller: empty response");
  const int nx = phi.n_x();
  const Eigen::MatrixXd dev = phi.phi_x[0] - Eigen::MatrixXd::Identity(nx, nx);
  if (dev.cwiseAbs().maxCoeff() > tol) {
    throw InvalidResponse("realize_controller: Phi_x(1) deviates from identity by " +
                          std::to_string(dev.cwiseAbs().maxCoeff()));
  }
  FIRPair fixed = phi;
  fixed.phi_x[0].setIdentity();
  return SLSController(std::move(fixed));
}

Eigen::MatrixXd closed_loop_input_map(const FIRPair& phi) {
  const int nx = phi.n_x(), nu = phi.n_u(), F = phi.length();
  Eigen::MatrixXd Cu(nu, nx * F);
  Cu.leftCols(nx) = phi.phi_u[0];
  for (int k = 2; k <= F; ++k) {
    Cu.block(0, (k - 1) * nx, nu, nx) = phi.phi_u[k - 1] - phi.phi_u[0] * phi.phi_x[k - 1];
  }
  return Cu;
}

Eigen::MatrixXd closed_loop_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const FIRPair& phi) {
  const int nx = phi.n_x(), nu = phi.n_u(), F = phi.length();
  require(F >= 1, "closed_loop_matrix: empty response");
  require(A.rows() == nx && A.cols() == nx && B.rows() == nx && B.cols() == nu,
          "closed_loop_matrix: plant and response dimensions differ");
  const int n = nx * F;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  M.topRows(nx) = B * closed_loop_input_map(phi);
  M.topLeftCorner(nx, nx) += A;
  if (F >= 2) {
    // delta_t = x_t - sum_k Phi_x(k) delta_{t+1-k} becomes the newest memory slot.
    M.block(nx, 0, nx, nx).setIdentity();
    for (int k = 2; k <= F; ++k) {
      M.block(nx, (k - 1) * nx, nx, nx) = -phi.phi_x[k - 1];
    }
    for (int j = 2; j <= F - 1; ++j) {
      M.block(j * nx, (j - 1) * nx, nx, nx).setIdentity();
    }
  }
  return M;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  require(M.rows() == M.cols(), "spectral_radius: matrix must be square");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W) {
  require(A.rows() == A.cols() && W.rows() == A.rows() && W.cols() == A.cols(),
          "solve_discrete_lyapunov: dimension mismatch");
  if (spectral_radius(A) >= 1.0) {
    throw Instability("solve_discrete_lyapunov: A is not Schur stable");
  }
  // Smith doubling: after j steps Sigma = sum_{i < 2^j} A^i W A^iT.
  Eigen::MatrixXd sigma = W;
  Eigen::MatrixXd Ak = A;
  for (int iter = 0; iter < 64; ++iter) {
    Eigen::MatrixXd step = Ak * sigma * Ak.transpose();
    sigma += step;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    if (step.norm() <= 1e-14 * sigma.norm()) return sigma;
    Ak = (Ak * Ak).eval();
  }
  throw Instability("solve_discrete_lyapunov: doubling iteration did not converge");
}

double stationary_cost_with_excitation(const LTISystem& system, const Eigen::MatrixXd& K,
                                       double sigma_e, const CostWeights& weights) {
  const int nx = system.n_x(), nu = system.n_u();
  require(K.rows() == nu && K.cols() == nx, "stationary_cost_with_excitation: K has wrong shape");
  require(sigma_e >= 0.0, "stationary_cost_with_excitation: sigma_e must be >= 0");
  const Eigen::MatrixXd Acl = system.A + system.B * K;
  if (spectral_radius(Acl) >= 1.0) {
    throw Instability("stationary_cost_with_excitation: A + B K is not stable");
  }
  const Eigen::MatrixXd W = system.sigma_w * system.sigma_w * Eigen::MatrixXd::Identity(nx, nx) +
                            sigma_e * sigma_e * system.B * system.B.transpose();
  const Eigen::MatrixXd sigma = solve_discrete_lyapunov(Acl, W);
  const Eigen::MatrixXd Su = K * sigma * K.transpose() + sigma_e * sigma_e * Eigen::MatrixXd::Identity(nu, nu);
  return (weights.Q * sigma).trace() + (weights.R * Su).trace();
}

double stationary_cost_with_excitation(const LTISystem& system, const FIRPair& phi,
                                       double sigma_e, const CostWeights& weights) {
  const int nx = system.n_x(), nu = system.n_u();
  require(sigma_e >= 0.0, "stationary_cost_with_excitation: sigma_e must be >= 0");
  const Eigen::MatrixXd M = closed_loop_matrix(system.A, system.B, phi);
  if (spectral_radius(M) >= 1.0) {
    throw Instability("stationary_cost_with_excitation: closed loop is not stable");
  }
  const int n = static_cast<int>(M.rows());
  Eigen::MatrixXd Ew = Eigen::MatrixXd::Zero(n, nx);
  Ew.topRows(nx).setIdentity();
  Eigen::MatrixXd Ee = Eigen::MatrixXd::Zero(n, nu);
  Ee.topRows(nx) = system.B;
  const Eigen::MatrixXd W = system.sigma_w * system.sigma_w * Ew * Ew.transpose() +
                            sigma_e * sigma_e * Ee * Ee.transpose();
  const Eigen::MatrixXd sigma = solve_discrete_lyapunov(M, W);
  const Eigen::MatrixXd Cu = closed_loop_input_map(phi);
  const Eigen::MatrixXd Su = Cu * sigma * Cu.transpose() + sigma_e * sigma_e * Eigen::MatrixXd::Identity(nu, nu);
  return (weights.Q * sigma.topLeftCorner(nx, nx)).trace() + (weights.R * Su).trace();
}

}  // namespace dualctl
