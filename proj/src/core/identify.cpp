#include "dualctl/identify.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "dualctl/error.hpp"
#include "dualctl/text_format.hpp"

namespace dualctl {

Dataset::Dataset(int n_x, int n_u) : n_x_(n_x), n_u_(n_u) {
  if (n_x < 1 || n_u < 1) throw ContractViolation("Dataset: dimensions must be positive");
}

void Dataset::add_rollout(Trajectory traj) {
  if (traj.states.size() != traj.inputs.size()) {
    throw ContractViolation("Dataset: rollout has unequal state and input counts");
  }
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    if (traj.states[t].size() != n_x_ || traj.inputs[t].size() != n_u_) {
      throw ContractViolation("Dataset: rollout dimension mismatch");
    }
  }
  if (!traj.states.empty()) rollouts_.push_back(std::move(traj));
}

int Dataset::num_pairs() const {
  int n = 0;
  for (const auto& r : rollouts_) n += r.length() - 1;
  return n;
}

Eigen::MatrixXd Dataset::regressors() const {
  Eigen::MatrixXd Z(n_x_ + n_u_, num_pairs());
  int col = 0;
  for (const auto& r : rollouts_) {
    for (int t = 0; t + 1 < r.length(); ++t, ++col) {
      Z.col(col).head(n_x_) = r.states[t];
      Z.col(col).tail(n_u_) = r.inputs[t];
    }
  }
  return Z;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd Y(n_x_, num_pairs());
  int col = 0;
  for (const auto& r : rollouts_) {
    for (int t = 0; t + 1 < r.length(); ++t, ++col) Y.col(col) = r.states[t + 1];
  }
  return Y;
}

Eigen::MatrixXd Dataset::gram() const {
  const Eigen::MatrixXd Z = regressors();
  Eigen::MatrixXd G = Z * Z.transpose();
  return 0.5 * (G + G.transpose());
}

Dataset merge(const Dataset& d1, const Dataset& d2) {
  if (d1.n_x() != d2.n_x() || d1.n_u() != d2.n_u()) {
    throw ContractViolation("merge: datasets have different dimensions");
  }
  Dataset out = d1;
  for (const auto& r : d2.rollouts()) out.add_rollout(r);
  return out;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  out << "rollout_id,t";
  for (int i = 1; i <= data.n_x(); ++i) out << ",x_" << i;
  for (int i = 1; i <= data.n_u(); ++i) out << ",u_" << i;
  out << "\n";
  int id = 0;
  for (const auto& r : data.rollouts()) {
    for (int t = 0; t < r.length(); ++t) {
      out << id << "," << (t + 1);
      for (int i = 0; i < data.n_x(); ++i) out << "," << format_double(r.states[t](i));
      for (int i = 0; i < data.n_u(); ++i) out << "," << format_double(r.inputs[t](i));
      out << "\n";
    }
    ++id;
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset", "missing header row");
  const auto header = split_csv(trim(line));
  if (header.size() < 4 || header[0] != "rollout_id" || header[1] != "t") {
    throw ValidationError("dataset", "header must start with rollout_id,t");
  }
  int nx = 0, nu = 0;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const std::string expect_x = "x_" + std::to_string(nx + 1);
    const std::string expect_u = "u_" + std::to_string(nu + 1);
    if (nu == 0 && header[c] == expect_x) {
      ++nx;
    } else if (header[c] == expect_u) {
      ++nu;
    } else {
      throw ValidationError("dataset", "unexpected column '" + header[c] + "'");
    }
  }
  if (nx == 0 || nu == 0) throw ValidationError("dataset", "need at least one x_ and one u_ column");

  std::vector<long> order;
  std::map<long, Trajectory> by_id;
  std::map<long, long> last_t;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ValidationError("dataset", "line " + std::to_string(lineno) + ": wrong column count");
    }
    long id = 0, t = 0;
    Eigen::VectorXd x(nx), u(nu);
    try {
      id = std::stol(cells[0]);
      t = std::stol(cells[1]);
      for (int i = 0; i < nx; ++i) x(i) = parse_double(cells[2 + i]);
      for (int i = 0; i < nu; ++i) u(i) = parse_double(cells[2 + nx + i]);
    } catch (const std::exception&) {
      throw ValidationError("dataset", "line " + std::to_string(lineno) + ": malformed number");
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      order.push_back(id);
      it = by_id.emplace(id, Trajectory{}).first;
    } else if (t != last_t[id] + 1) {
      throw ValidationError("dataset", "line " + std::to_string(lineno) +
                                           ": time index must increase by one within a rollout");
    }
    last_t[id] = t;
    it->second.states.push_back(x);
    it->second.inputs.push_back(u);
  }
  Dataset data(nx, nu);
  for (long id : order) data.add_rollout(std::move(by_id[id]));
  return data;
}

LeastSquaresFit least_squares(const Dataset& data) {
  const int nx = data.n_x(), nu = data.n_u(), p = nx + nu;
  const Eigen::MatrixXd Z = data.regressors();
  const Eigen::MatrixXd Y = data.targets();
  const Eigen::MatrixXd Zt = Z.transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zt);
  const int rank = Z.cols() == 0 ? 0 : static_cast<int>(qr.rank());
  if (rank < p) {
    throw UnderdeterminedData("least_squares: regressor matrix has rank " + std::to_string(rank) +
                                  " but " + std::to_string(p) + " is required",
                              rank, p);
  }
  const Eigen::MatrixXd theta_t = qr.solve(Eigen::MatrixXd(Y.transpose()));  // p x nx
  LeastSquaresFit fit;
  fit.A_hat = theta_t.topRows(nx).transpose();
  fit.B_hat = theta_t.bottomRows(nu).transpose();
  return fit;
}

double chi_square_quantile(int dof, double p) {
  if (dof < 1) throw ContractViolation("chi_square_quantile: dof must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw ContractViolation("chi_square_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

Model build_model(const Dataset& data, double sigma_w, double delta, ChiSquareConvention convention) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("build_model: delta must lie in (0, 1)");
  if (!(sigma_w > 0.0)) throw ContractViolation("build_model: sigma_w must be positive");
  const LeastSquaresFit fit = least_squares(data);
  const int nx = data.n_x(), nu = data.n_u();
  Model m;
  m.A_hat = fit.A_hat;
  m.B_hat = fit.B_hat;
  m.delta = delta;
  m.sigma_w = sigma_w;
  const double p = convention == ChiSquareConvention::kCoverage ? 1.0 - delta : delta;
  m.c_delta = chi_square_quantile(nx * nx + nx * nu, p);
  m.D = data.gram() / (sigma_w * sigma_w * m.c_delta);
  return m;
}

double estimate_noise_sigma(const Dataset& data, const LeastSquaresFit& fit) {
  const int nx = data.n_x(), nu = data.n_u();
  const Eigen::MatrixXd Z = data.regressors();
  const Eigen::MatrixXd Y = data.targets();
  Eigen::MatrixXd theta(nx, nx + nu);
  theta << fit.A_hat, fit.B_hat;
  const double rss = (Y - theta * Z).squaredNorm();
  const int dof = static_cast<int>(Z.cols()) * nx - (nx + nu) * nx;
  if (dof <= 0) throw UnderdeterminedData("estimate_noise_sigma: no residual degrees of freedom", 0, 1);
  return std::sqrt(rss / dof);
}

bool in_credibility_region(const Model& model, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           double tol) {
  const int nx = model.n_x(), nu = model.n_u();
  if (A.rows() != nx || A.cols() != nx || B.rows() != nx || B.cols() != nu) {
    throw ContractViolation("in_credibility_region: dimension mismatch");
  }
  Eigen::MatrixXd X(nx + nu, nx);
  X.topRows(nx) = (model.A_hat - A).transpose();
  X.bottomRows(nu) = (model.B_hat - B).transpose();
  Eigen::MatrixXd M = X.transpose() * model.D * X;
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() <= 1.0 + tol;
}

}  // namespace dualctl
