#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dualctl/sdp.hpp"

namespace dualctl::sdp {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Block = ReducedProblem::Block;
using Entry = ReducedProblem::Entry;

/// Variables touching exactly one block and absent from H are eliminated
/// block by block before the shared Schur complement is formed.
struct Structure {
  int n = 0;
  std::vector<int> owner;  // block id for local variables, -1 for shared
  std::vector<int> pos;    // position within the owner's local list or the shared list
  std::vector<std::vector<int>> locals;
  std::vector<int> shared;
};

Structure analyze(const ReducedProblem& p) {
  Structure st;
  st.n = p.num_vars;
  std::vector<int> count(st.n, 0), last(st.n, -1);
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    for (const auto& c : p.blocks[j].coefs) {
      if (last[c.var] != static_cast<int>(j)) {
        ++count[c.var];
        last[c.var] = static_cast<int>(j);
      }
    }
  }
  st.owner.assign(st.n, -1);
  st.pos.assign(st.n, -1);
  st.locals.resize(p.blocks.size());
  for (int a = 0; a < st.n; ++a) {
    const bool h_zero = p.H.row(a).cwiseAbs().maxCoeff() == 0.0;
    if (count[a] == 1 && h_zero) {
      st.owner[a] = last[a];
      st.pos[a] = static_cast<int>(st.locals[last[a]].size());
      st.locals[last[a]].push_back(a);
    } else {
      st.pos[a] = static_cast<int>(st.shared.size());
      st.shared.push_back(a);
    }
  }
  return st;
}

double inner(const std::vector<Entry>& es, const Mat& X) {
  double s = 0.0;
  for (const Entry& e : es) s += e.i == e.j ? e.v * X(e.i, e.i) : e.v * (X(e.i, e.j) + X(e.j, e.i));
  return s;
}

Mat apply(const Block& b, const Vec& x) {
  Mat M = Mat::Zero(b.size, b.size);
  for (const auto& c : b.coefs) {
    const double xa = x(c.var);
    if (xa == 0.0) continue;
    for (const Entry& e : c.entries) {
      M(e.i, e.j) += xa * e.v;
      if (e.i != e.j) M(e.j, e.i) += xa * e.v;
    }
  }
  return M;
}

void adjoint(const Block& b, const Mat& X, Vec& out) {
  for (const auto& c : b.coefs) out(c.var) += inner(c.entries, X);
}

Mat sym(const Mat& M) { return 0.5 * (M + M.transpose()); }

double dot(const Mat& A, const Mat& B) { return A.cwiseProduct(B).sum(); }

/// Schur system M = H + sum_j G_j' (W_j^-1 (.) W_j^-1) G_j in arrow form.
class NewtonSystem {
 public:
  NewtonSystem(const ReducedProblem& p, const Structure& st) : p_(p), st_(st) {}

  bool factor(const std::vector<Mat>& winv) {
    const int ns = static_cast<int>(st_.shared.size());
    const std::size_t nb = p_.blocks.size();
    A_.assign(nb, Mat());
    B_.assign(nb, Mat());
    for (std::size_t j = 0; j < nb; ++j) {
      const int nl = static_cast<int>(st_.locals[j].size());
      A_[j] = Mat::Zero(nl, nl);
      B_[j] = Mat::Zero(nl, ns);
    }
    Sh_ = Mat::Zero(ns, ns);
    for (int a = 0; a < ns; ++a)
      for (int b = 0; b < ns; ++b) Sh_(a, b) = p_.H(st_.shared[a], st_.shared[b]);

    for (std::size_t j = 0; j < nb; ++j) assemble_block(static_cast<int>(j), winv[j]);

    llt_A_.assign(nb, Eigen::LLT<Mat>());
    AinvB_.assign(nb, Mat());
    Mat S = Sh_;
    for (std::size_t j = 0; j < nb; ++j) {
      if (A_[j].rows() == 0) continue;
      if (!factor_pd(A_[j], llt_A_[j])) return false;
      AinvB_[j] = llt_A_[j].solve(B_[j]);
      S.noalias() -= B_[j].transpose() * AinvB_[j];
    }
    if (ns > 0 && !factor_pd(S, llt_S_)) return false;
    return true;
  }

  Vec solve(const Vec& r) const {
    Vec x = solve_once(r);
    const Vec res = r - multiply(x);
    x += solve_once(res);
    return x;
  }

 private:
  static bool factor_pd(Mat M, Eigen::LLT<Mat>& llt) {
    llt.compute(M);
    if (llt.info() == Eigen::Success) return true;
    const double reg = 1e-12 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
    M.diagonal().array() += reg;
    llt.compute(M);
    return llt.info() == Eigen::Success;
  }

  void add(int j, int a, int b, double v) {
    const int oa = st_.owner[a], ob = st_.owner[b];
    const int pa = st_.pos[a], pb = st_.pos[b];
    if (oa >= 0 && ob >= 0) {
      A_[j](pa, pb) += v;
      if (a != b) A_[j](pb, pa) += v;
    } else if (oa >= 0) {
      B_[j](pa, pb) += v;
    } else if (ob >= 0) {
      B_[j](pb, pa) += v;
    } else {
      Sh_(pa, pb) += v;
      if (a != b) Sh_(pb, pa) += v;
    }
  }

  void assemble_block(int j, const Mat& W) {
    const Block& blk = p_.blocks[j];
    const int m = blk.size;
    Mat G(m, m);
    Mat F(m, m);
    for (std::size_t ka = 0; ka < blk.coefs.size(); ++ka) {
      const auto& ca = blk.coefs[ka];
      if (static_cast<int>(ca.entries.size()) <= m) {
        G.setZero();
        for (const Entry& e : ca.entries) {
          if (e.i == e.j) {
            G.noalias() += e.v * W.col(e.i) * W.col(e.i).transpose();
          } else {
            G.noalias() += e.v * W.col(e.i) * W.col(e.j).transpose();
            G.noalias() += e.v * W.col(e.j) * W.col(e.i).transpose();
          }
        }
      } else {
        F.setZero();
        for (const Entry& e : ca.entries) {
          F(e.i, e.j) += e.v;
          if (e.i != e.j) F(e.j, e.i) += e.v;
        }
        G.noalias() = W * F * W;
      }
      for (std::size_t kb = ka; kb < blk.coefs.size(); ++kb) {
        const auto& cb = blk.coefs[kb];
        add(j, ca.var, cb.var, inner(cb.entries, G));
      }
    }
  }

  Vec solve_once(const Vec& r) const {
    const int ns = static_cast<int>(st_.shared.size());
    Vec rs(ns);
    for (int a = 0; a < ns; ++a) rs(a) = r(st_.shared[a]);
    std::vector<Vec> rl(p_.blocks.size());
    for (std::size_t j = 0; j < p_.blocks.size(); ++j) {
      const auto& loc = st_.locals[j];
      if (loc.empty()) continue;
      rl[j].resize(loc.size());
      for (std::size_t k = 0; k < loc.size(); ++k) rl[j](k) = r(loc[k]);
      rl[j] = llt_A_[j].solve(rl[j]);
      if (ns > 0) rs.noalias() -= B_[j].transpose() * rl[j];
    }
    Vec xs = ns > 0 ? Vec(llt_S_.solve(rs)) : Vec();
    Vec x(st_.n);
    for (int a = 0; a < ns; ++a) x(st_.shared[a]) = xs(a);
    for (std::size_t j = 0; j < p_.blocks.size(); ++j) {
      const auto& loc = st_.locals[j];
      if (loc.empty()) continue;
      Vec xl = rl[j];
      if (ns > 0) xl.noalias() -= AinvB_[j] * xs;
      for (std::size_t k = 0; k < loc.size(); ++k) x(loc[k]) = xl(k);
    }
    return x;
  }

  Vec multiply(const Vec& x) const {
    const int ns = static_cast<int>(st_.shared.size());
    Vec xs(ns);
    for (int a = 0; a < ns; ++a) xs(a) = x(st_.shared[a]);
    Vec ys = ns > 0 ? Vec(Sh_ * xs) : Vec();
    Vec y(st_.n);
    for (std::size_t j = 0; j < p_.blocks.size(); ++j) {
      const auto& loc = st_.locals[j];
      if (loc.empty()) continue;
      Vec xl(loc.size());
      for (std::size_t k = 0; k < loc.size(); ++k) xl(k) = x(loc[k]);
      Vec yl = A_[j] * xl;
      if (ns > 0) {
        yl.noalias() += B_[j] * xs;
        ys.noalias() += B_[j].transpose() * xl;
      }
      for (std::size_t k = 0; k < loc.size(); ++k) y(loc[k]) = yl(k);
    }
    for (int a = 0; a < ns; ++a) y(st_.shared[a]) = ys(a);
    return y;
  }

  const ReducedProblem& p_;
  const Structure& st_;
  std::vector<Mat> A_, B_, AinvB_;
  Mat Sh_;
  std::vector<Eigen::LLT<Mat>> llt_A_;
  Eigen::LLT<Mat> llt_S_;
};

struct Scaling {
  Vec lambda;
  Mat Rinv;  // R^-1 with R^T Z R = Lambda = R^-1 S R^-T
  Mat Winv;  // R^-T R^-1
};

bool nt_scaling(const Mat& S, const Mat& Z, Scaling& out) {
  Eigen::LLT<Mat> ls(S), lz(Z);
  if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
  const Mat Ls = ls.matrixL();
  const Mat Lz = lz.matrixL();
  Eigen::JacobiSVD<Mat> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.lambda = svd.singularValues();
  if (!(out.lambda.minCoeff() > 0.0) || !out.lambda.allFinite()) return false;
  const Vec isq = out.lambda.cwiseSqrt().cwiseInverse();
  out.Rinv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
  out.Winv = sym(out.Rinv.transpose() * out.Rinv);
  return true;
}

/// Largest step keeping Lambda + alpha * dX positive semidefinite.
double max_step(const Vec& lambda, const Mat& dX) {
  const Vec isq = lambda.cwiseSqrt().cwiseInverse();
  const Mat T = sym(isq.asDiagonal() * dX * isq.asDiagonal());
  Eigen::SelfAdjointEigenSolver<Mat> es(T, Eigen::EigenvaluesOnly);
  const double e = es.eigenvalues().minCoeff();
  return e < 0.0 ? -1.0 / e : std::numeric_limits<double>::infinity();
}

struct Direction {
  Vec dx;
  std::vector<Mat> dS, dSt, dZt;
};

struct IpmOutcome {
  enum class Kind { kConverged, kCertificate, kFailed } kind = Kind::kFailed;
  Vec x;
  double pres = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string message;
};

IpmOutcome run_ipm(const ReducedProblem& p, const SolverSettings& settings) {
  const std::size_t nb = p.blocks.size();
  const Structure st = analyze(p);
  NewtonSystem newton(p, st);
  IpmOutcome out;

  double c_norm = 0.0;
  int total_dim = 0;
  for (const Block& b : p.blocks) {
    c_norm += b.constant.squaredNorm();
    total_dim += b.size;
  }
  c_norm = std::sqrt(c_norm);
  const double q_norm = p.q.norm();

  // Initial point from the identity-scaled least-squares system.
  std::vector<Mat> ident(nb);
  for (std::size_t j = 0; j < nb; ++j) ident[j] = Mat::Identity(p.blocks[j].size, p.blocks[j].size);
  if (!newton.factor(ident)) {
    out.message = "singular Newton system at the initial point";
    return out;
  }
  Vec rhs0 = -p.q;
  for (const Block& b : p.blocks) {
    Vec g = Vec::Zero(p.num_vars);
    adjoint(b, b.constant, g);
    rhs0 -= g;
  }
  Vec x = newton.solve(rhs0);
  std::vector<Mat> S(nb), Z(nb);
  double min_s = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < nb; ++j) {
    S[j] = sym(p.blocks[j].constant + apply(p.blocks[j], x));
    Z[j] = -S[j];
    Eigen::SelfAdjointEigenSolver<Mat> es(S[j], Eigen::EigenvaluesOnly);
    min_s = std::min(min_s, es.eigenvalues().minCoeff());
  }
  double min_z = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < nb; ++j) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Z[j], Eigen::EigenvaluesOnly);
    min_z = std::min(min_z, es.eigenvalues().minCoeff());
  }
  const double shift_s = -min_s, shift_z = -min_z;
  for (std::size_t j = 0; j < nb; ++j) {
    if (shift_s >= 0.0) S[j].diagonal().array() += 1.0 + shift_s;
    if (shift_z >= 0.0) Z[j].diagonal().array() += 1.0 + shift_z;
  }

  std::vector<Scaling> sc(nb);
  std::vector<Mat> winv(nb);
  std::vector<Mat> rp(nb);
  int stalls = 0;
  for (int it = 0; it <= settings.max_iterations; ++it) {
    out.iterations = it;
    // Residuals.
    Vec gz = Vec::Zero(p.num_vars);
    double gap = 0.0, pres2 = 0.0, cz = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      rp[j] = S[j] - p.blocks[j].constant - apply(p.blocks[j], x);
      pres2 += rp[j].squaredNorm();
      adjoint(p.blocks[j], Z[j], gz);
      gap += dot(S[j], Z[j]);
      cz += dot(p.blocks[j].constant, Z[j]);
    }
    const Vec hx = p.H * x;
    const Vec rd = hx + p.q - gz;
    const double pcost = 0.5 * x.dot(hx) + p.q.dot(x) + p.c0;
    const double pres = std::sqrt(pres2) / std::max(1.0, c_norm);
    const double dres = rd.norm() / std::max(1.0, q_norm);
    const double mu = gap / total_dim;
    out.x = x;
    out.pres = pres;
    if (settings.verbose) {
      std::fprintf(stderr, "ipm %3d pcost % .8e gap %.2e pres %.2e dres %.2e\n", it, pcost, gap, pres, dres);
    }
    if (pres <= settings.feas_tol && dres <= settings.feas_tol &&
        gap <= settings.gap_tol * std::max(1.0, std::abs(pcost))) {
      out.kind = IpmOutcome::Kind::kConverged;
      out.message = "converged in " + std::to_string(it) + " iterations";
      return out;
    }
    if (cz < 0.0 && gz.norm() <= settings.feas_tol * -cz) {
      out.kind = IpmOutcome::Kind::kCertificate;
      out.message = "primal infeasibility certificate found";
      return out;
    }
    if (it == settings.max_iterations) {
      out.message = "iteration limit reached";
      return out;
    }

    for (std::size_t j = 0; j < nb; ++j) {
      if (!nt_scaling(S[j], Z[j], sc[j])) {
        out.message = "lost positive definiteness at iteration " + std::to_string(it);
        return out;
      }
      winv[j] = sc[j].Winv;
    }
    if (!newton.factor(winv)) {
      out.message = "singular Newton system at iteration " + std::to_string(it);
      return out;
    }

    auto direction = [&](const std::vector<Mat>& Dc) {
      Direction d;
      Vec r = -rd;
      for (std::size_t j = 0; j < nb; ++j) {
        const Mat T = sc[j].Rinv.transpose() * Dc[j] * sc[j].Rinv + winv[j] * rp[j] * winv[j];
        adjoint(p.blocks[j], T, r);
      }
      d.dx = newton.solve(r);
      d.dS.resize(nb);
      d.dSt.resize(nb);
      d.dZt.resize(nb);
      for (std::size_t j = 0; j < nb; ++j) {
        d.dS[j] = sym(apply(p.blocks[j], d.dx) - rp[j]);
        d.dSt[j] = sym(sc[j].Rinv * d.dS[j] * sc[j].Rinv.transpose());
        d.dZt[j] = sym(Dc[j] - d.dSt[j]);
      }
      return d;
    };
    auto step_of = [&](const Direction& d) {
      double a = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nb; ++j) {
        a = std::min(a, max_step(sc[j].lambda, d.dSt[j]));
        a = std::min(a, max_step(sc[j].lambda, d.dZt[j]));
      }
      return a;
    };

    // Predictor.
    std::vector<Mat> Dc(nb);
    for (std::size_t j = 0; j < nb; ++j) Dc[j] = Mat((-sc[j].lambda).asDiagonal());
    const Direction aff = direction(Dc);
    const double alpha_aff = std::min(1.0, step_of(aff));
    const double sigma = std::pow(std::max(0.0, 1.0 - alpha_aff), 3);

    // Corrector.
    for (std::size_t j = 0; j < nb; ++j) {
      const Vec& l = sc[j].lambda;
      const int m = static_cast<int>(l.size());
      Mat C = -sym(aff.dSt[j] * aff.dZt[j]);
      C.diagonal().array() += sigma * mu;
      C.diagonal() -= l.cwiseProduct(l);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) C(a, b) *= 2.0 / (l(a) + l(b));
      Dc[j] = C;
    }
    const Direction d = direction(Dc);
    const double alpha = std::min(1.0, 0.99 * step_of(d));
    if (!(alpha > 1e-10)) {
      if (++stalls >= 3) {
        out.message = "step length collapsed at iteration " + std::to_string(it);
        return out;
      }
    } else {
      stalls = 0;
    }

    x += alpha * d.dx;
    for (std::size_t j = 0; j < nb; ++j) {
      S[j] = sym(S[j] + alpha * d.dS[j]);
      Z[j] = sym(Z[j] + alpha * (sc[j].Rinv.transpose() * d.dZt[j] * sc[j].Rinv));
    }
  }
  return out;
}

/// min t s.t. C_j + G_j x + t I >= 0, t >= -1.
ReducedProblem phase_one(const ReducedProblem& p, std::vector<int>& kept) {
  std::vector<int> map(p.num_vars, -1);
  kept.clear();
  for (const Block& b : p.blocks) {
    for (const auto& c : b.coefs) {
      if (map[c.var] < 0) {
        map[c.var] = static_cast<int>(kept.size());
        kept.push_back(c.var);
      }
    }
  }
  const int t = static_cast<int>(kept.size());
  ReducedProblem q;
  q.num_vars = t + 1;
  q.H = Mat::Zero(q.num_vars, q.num_vars);
  q.q = Vec::Zero(q.num_vars);
  q.q(t) = 1.0;
  for (const Block& b : p.blocks) {
    Block nbk;
    nbk.size = b.size;
    nbk.constant = b.constant;
    for (const auto& c : b.coefs) nbk.coefs.push_back({map[c.var], c.entries});
    ReducedProblem::Coefficient ct{t, {}};
    for (int i = 0; i < b.size; ++i) ct.entries.push_back({i, i, 1.0});
    nbk.coefs.push_back(std::move(ct));
    q.blocks.push_back(std::move(nbk));
  }
  Block bound;
  bound.size = 1;
  bound.constant = Mat::Constant(1, 1, 1.0);
  bound.coefs.push_back({t, {{0, 0, 1.0}}});
  q.blocks.push_back(std::move(bound));
  return q;
}

}  // namespace

ReducedResult InteriorPointBackend::solve(const ReducedProblem& problem, const SolverSettings& settings) const {
  ReducedResult res;
  const IpmOutcome main = run_ipm(problem, settings);
  res.iterations = main.iterations;
  res.x = main.x;
  res.message = main.message;
  if (main.kind == IpmOutcome::Kind::kConverged) {
    res.status = Status::kOptimal;
    return res;
  }
  if (main.kind == IpmOutcome::Kind::kCertificate) {
    res.status = Status::kInfeasible;
    return res;
  }
  res.status = Status::kInaccurate;
  if (main.pres <= 1e-6) return res;

  std::vector<int> kept;
  const ReducedProblem p1 = phase_one(problem, kept);
  const IpmOutcome feas = run_ipm(p1, settings);
  res.iterations += feas.iterations;
  double scale = 1.0;
  for (const Block& b : problem.blocks) {
    if (b.constant.size() > 0) scale = std::max(scale, b.constant.cwiseAbs().maxCoeff());
  }
  const double t = feas.x.size() > 0 ? feas.x(feas.x.size() - 1) : 0.0;
  if (feas.kind == IpmOutcome::Kind::kConverged && t > 1e-6 * scale) {
    res.status = Status::kInfeasible;
    res.message = main.message + "; phase I certifies infeasibility (t* = " + std::to_string(t) + ")";
  } else if (feas.kind == IpmOutcome::Kind::kCertificate) {
    res.status = Status::kInfeasible;
    res.message = main.message + "; phase I found an infeasibility certificate";
  } else {
    res.message = main.message + "; phase I finds the problem feasible";
  }
  return res;
}

}  // namespace dualctl::sdp
