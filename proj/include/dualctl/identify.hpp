#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualctl/lin_sys.hpp"

namespace dualctl {

/// A list of contiguous rollouts. Regressor pairs (x_t, u_t) -> x_{t+1} are
/// formed within a rollout only.
class Dataset {
 public:
  Dataset(int n_x, int n_u);

  void add_rollout(Trajectory traj);

  int n_x() const { return n_x_; }
  int n_u() const { return n_u_; }
  const std::vector<Trajectory>& rollouts() const { return rollouts_; }
  int num_pairs() const;

  /// Stacked regressors Z = [z_1 ... z_N], z = [x_t; u_t], and targets
  /// Y = [x_2 ... x_{N+1}] over all usable pairs.
  Eigen::MatrixXd regressors() const;
  Eigen::MatrixXd targets() const;

  /// sum z z^T over usable pairs.
  Eigen::MatrixXd gram() const;

 private:
  int n_x_;
  int n_u_;
  std::vector<Trajectory> rollouts_;
};

Dataset merge(const Dataset& d1, const Dataset& d2);

/// CSV with header `rollout_id,t,x_1..x_nx,u_1..u_nu`; rows in time order.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

/// Which tail of the chi-squared distribution defines c_delta.
enum class ChiSquareConvention {
  kCoverage,  // c_delta is the (1 - delta)-quantile: a 1 - delta credibility region
  kLiteral,   // c_delta is the delta-quantile
};

/// Nominal estimates and the uncertainty matrix D. The credibility region is
/// { (A, B) : X^T D X <= I, X = [A_hat - A, B_hat - B]^T }.
struct Model {
  Eigen::MatrixXd A_hat;
  Eigen::MatrixXd B_hat;
  Eigen::MatrixXd D;
  double delta = 0.1;
  double sigma_w = 1.0;
  double c_delta = 0.0;

  int n_x() const { return static_cast<int>(A_hat.rows()); }
  int n_u() const { return static_cast<int>(B_hat.cols()); }
};

struct LeastSquaresFit {
  Eigen::MatrixXd A_hat;
  Eigen::MatrixXd B_hat;
};

/// Ordinary least squares via column-pivoted QR of the regressor matrix.
/// Throws UnderdeterminedData when the regressors are rank deficient.
LeastSquaresFit least_squares(const Dataset& data);

/// Value c with P(chi2_dof <= c) = p.
double chi_square_quantile(int dof, double p);

Model build_model(const Dataset& data, double sigma_w, double delta,
                  ChiSquareConvention convention = ChiSquareConvention::kCoverage);

/// Unbiased residual standard deviation of the least-squares fit. Not used
/// by build_model (sigma_w is taken as known).
double estimate_noise_sigma(const Dataset& data, const LeastSquaresFit& fit);

/// lambda_max(X^T D X) <= 1 + tol.
bool in_credibility_region(const Model& model, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           double tol = 1e-9);

}  // namespace dualctl
