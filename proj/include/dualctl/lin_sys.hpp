#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "dualctl/fir.hpp"
#include "dualctl/rng.hpp"

namespace dualctl {

/// x_{t+1} = A x_t + B u_t + w_t,  w_t ~ N(0, sigma_w^2 I).
struct LTISystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double sigma_w = 1.0;

  LTISystem() = default;
  LTISystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_, double sigma_w_);

  int n_x() const { return static_cast<int>(A.rows()); }
  int n_u() const { return static_cast<int>(B.cols()); }
};

/// Stage cost x^T Q x + u^T R u.
struct CostWeights {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  CostWeights() = default;
  CostWeights(Eigen::MatrixXd Q_, Eigen::MatrixXd R_);
};

/// states[i] and inputs[i] are x_{i+1} and u_{i+1} (time starts at 1).
struct Trajectory {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;

  int length() const { return static_cast<int>(states.size()); }
};

/// A causal state-feedback policy. Controllers carry internal state and are
/// not shared between concurrent simulations.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual int n_x() const = 0;
  virtual int n_u() const = 0;
  virtual Eigen::VectorXd act(const Eigen::VectorXd& x) = 0;
  virtual void reset() {}
};

class ZeroController final : public Controller {
 public:
  ZeroController(int n_x, int n_u) : n_x_(n_x), n_u_(n_u) {}
  int n_x() const override { return n_x_; }
  int n_u() const override { return n_u_; }
  Eigen::VectorXd act(const Eigen::VectorXd&) override { return Eigen::VectorXd::Zero(n_u_); }

 private:
  int n_x_;
  int n_u_;
};

/// u = K x.
class StaticGainController final : public Controller {
 public:
  explicit StaticGainController(Eigen::MatrixXd K) : K_(std::move(K)) {}
  int n_x() const override { return static_cast<int>(K_.cols()); }
  int n_u() const override { return static_cast<int>(K_.rows()); }
  Eigen::VectorXd act(const Eigen::VectorXd& x) override { return K_ * x; }

 private:
  Eigen::MatrixXd K_;
};

/// Open-loop white input u ~ N(0, scale^2 I), independent of the state.
class WhiteInputController final : public Controller {
 public:
  WhiteInputController(int n_x, int n_u, double scale, GaussianStream stream)
      : n_x_(n_x), n_u_(n_u), scale_(scale), stream_(std::move(stream)) {}
  int n_x() const override { return n_x_; }
  int n_u() const override { return n_u_; }
  Eigen::VectorXd act(const Eigen::VectorXd&) override { return scale_ * stream_.vector(n_u_); }

 private:
  int n_x_;
  int n_u_;
  double scale_;
  GaussianStream stream_;
};

/// Wraps a controller and adds i.i.d. excitation e ~ N(0, sigma^2 I) to its
/// output. The wrapped controller never sees the excitation.
class ExcitedController final : public Controller {
 public:
  ExcitedController(std::unique_ptr<Controller> inner, double sigma, GaussianStream stream)
      : inner_(std::move(inner)), sigma_(sigma), stream_(std::move(stream)) {}
  int n_x() const override { return inner_->n_x(); }
  int n_u() const override { return inner_->n_u(); }
  Eigen::VectorXd act(const Eigen::VectorXd& x) override;
  void reset() override { inner_->reset(); }

 private:
  std::unique_ptr<Controller> inner_;
  double sigma_;
  GaussianStream stream_;
};

/// Time-domain realization of K = Phi_u Phi_x^{-1} through internal
/// disturbance estimates:
///   delta_t = x_t - sum_{k=2}^F Phi_x(k) delta_{t+1-k}
///   u_t     = sum_{k=1}^F Phi_u(k) delta_{t+1-k}
/// with delta_s = 0 for s <= 0.
class SLSController final : public Controller {
 public:
  explicit SLSController(FIRPair phi);

  int n_x() const override { return phi_.n_x(); }
  int n_u() const override { return phi_.n_u(); }
  Eigen::VectorXd act(const Eigen::VectorXd& x) override;
  void reset() override;

  const FIRPair& response() const { return phi_; }
  /// Most recent disturbance estimates, newest first (delta_t, delta_{t-1}, ...).
  std::vector<Eigen::VectorXd> delta_history() const;

 private:
  FIRPair phi_;
  std::vector<Eigen::VectorXd> ring_;  // F-1 past estimates
  int head_ = 0;                       // slot of delta_{t-1}
};

/// Result of a rollout that may be continued: `drift` is A x_N + B u_N, the
/// noise-free part of the next state.
struct Rollout {
  Trajectory traj;
  Eigen::VectorXd drift;
};

/// Closed-loop rollout of `horizon` steps starting at `first_state`; each
/// transition adds one draw from `noise` scaled by sigma_w.
Rollout rollout(const LTISystem& system, Controller& controller, const Eigen::VectorXd& first_state,
                int horizon, GaussianStream& noise);

/// Simulates from x_0 = 0, so the first recorded state is x_1 = w_0.
Trajectory simulate(const LTISystem& system, Controller& controller, int horizon,
                    std::uint64_t rng_seed);

/// sum_{t=t1}^{t2} x_t^T Q x_t + u_t^T R u_t, with 1-based inclusive bounds.
double evaluate_cost(const Trajectory& traj, const CostWeights& weights, int t1, int t2);

/// Renormalizes Phi_x(1) to I after checking it is within `tol` of I.
SLSController realize_controller(const FIRPair& phi, double tol = 1e-6);

/// Update matrix of the augmented state (x_t, delta_{t-1}, ..., delta_{t-F+1})
/// when the realized controller runs in closed loop with (A, B).
Eigen::MatrixXd closed_loop_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const FIRPair& phi);

/// Rows selecting u_t from the augmented state used by closed_loop_matrix.
Eigen::MatrixXd closed_loop_input_map(const FIRPair& phi);

double spectral_radius(const Eigen::MatrixXd& M);

/// Solves Sigma = A Sigma A^T + W for stable A.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W);

/// Stationary expected stage cost under u = K x + e, e ~ N(0, sigma_e^2 I).
double stationary_cost_with_excitation(const LTISystem& system, const Eigen::MatrixXd& K,
                                       double sigma_e, const CostWeights& weights);

/// Same quantity for a realized FIR controller: the closed loop is the
/// augmented system from closed_loop_matrix.
double stationary_cost_with_excitation(const LTISystem& system, const FIRPair& phi,
                                       double sigma_e, const CostWeights& weights);

}  // namespace dualctl
