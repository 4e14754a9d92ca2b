#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dualctl {

/// Finite impulse response closed-loop maps from disturbance to state and
/// input. Taps are stored for lags k = 1..F (the lag-0 taps of a strictly
/// proper response are identically zero and are never stored); index 0 of
/// each vector holds lag 1.
struct FIRPair {
  std::vector<Eigen::MatrixXd> phi_x;  // n_x x n_x each
  std::vector<Eigen::MatrixXd> phi_u;  // n_u x n_x each

  int length() const { return static_cast<int>(phi_x.size()); }
  int n_x() const { return phi_x.empty() ? 0 : static_cast<int>(phi_x[0].rows()); }
  int n_u() const { return phi_u.empty() ? 0 : static_cast<int>(phi_u[0].rows()); }

  static FIRPair zeros(int n_x, int n_u, int F);
};

/// Vertically stacked responses: row block k (k = 1..F) is
/// [Phi_x(k)^T, Phi_u(k)^T], so the matrix is (n_x F) x (n_x + n_u).
Eigen::MatrixXd stack(const FIRPair& phi);

/// Inverse of stack().
FIRPair unstack(const Eigen::MatrixXd& stacked, int n_x, int n_u);

}  // namespace dualctl
