#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "dualctl/error.hpp"
#include "dualctl/sdp.hpp"

namespace dualctl::sdp {
namespace {

/// Sparse affine form over scalar unknowns: c + sum t.second * u[t.first].
struct Lin {
  double c = 0.0;
  std::vector<std::pair<int, double>> t;
};

void compress(Lin& l, double drop_rel = 0.0) {
  std::sort(l.t.begin(), l.t.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, double>> out;
  out.reserve(l.t.size());
  for (const auto& p : l.t) {
    if (!out.empty() && out.back().first == p.first) {
      out.back().second += p.second;
    } else {
      out.push_back(p);
    }
  }
  double mx = 0.0;
  for (const auto& p : out) mx = std::max(mx, std::abs(p.second));
  const double cut = drop_rel * mx;
  out.erase(std::remove_if(out.begin(), out.end(),
                           [cut](const auto& p) { return p.second == 0.0 || std::abs(p.second) <= cut; }),
            out.end());
  l.t = std::move(out);
}

class Layout {
 public:
  explicit Layout(const std::vector<Variable>& vars) : vars_(vars) {
    offset_.reserve(vars.size());
    int off = 0;
    for (const Variable& v : vars) {
      offset_.push_back(off);
      off += v.symmetric ? v.rows * (v.rows + 1) / 2 : v.rows * v.cols;
    }
    total_ = off;
  }

  int total() const { return total_; }

  int index(int var, int r, int c) const {
    const Variable& v = vars_[var];
    if (v.symmetric) {
      if (r > c) std::swap(r, c);
      return offset_[var] + r * v.rows - r * (r - 1) / 2 + (c - r);
    }
    return offset_[var] + r * v.cols + c;
  }

  Lin lower(const AffineScalar& e) const {
    Lin l;
    l.c = e.constant;
    l.t.reserve(e.terms.size());
    for (const Term& t : e.terms) l.t.emplace_back(index(t.var, t.row, t.col), t.coef);
    compress(l);
    return l;
  }

 private:
  const std::vector<Variable>& vars_;
  std::vector<int> offset_;
  int total_ = 0;
};

/// Gauss-Jordan elimination of the equality system. Each eliminated unknown
/// is kept as an affine form in the remaining free unknowns.
class Eliminator {
 public:
  explicit Eliminator(int n) : expr_(n) {}

  Lin substitute(const Lin& l) const {
    Lin out;
    out.c = l.c;
    for (const auto& [g, a] : l.t) {
      if (expr_[g]) {
        out.c += a * expr_[g]->c;
        for (const auto& [f, b] : expr_[g]->t) out.t.emplace_back(f, a * b);
      } else {
        out.t.emplace_back(g, a);
      }
    }
    compress(out);
    return out;
  }

  /// Returns false when the row is inconsistent with earlier rows.
  bool add(const Lin& row) {
    double scale = std::abs(row.c);
    for (const auto& p : row.t) scale = std::max(scale, std::abs(p.second));
    Lin l = substitute(row);
    compress(l, 1e-12);
    if (l.t.empty()) return std::abs(l.c) <= 1e-11 * std::max(1.0, scale);
    std::size_t piv = 0;
    for (std::size_t k = 1; k < l.t.size(); ++k) {
      if (std::abs(l.t[k].second) > std::abs(l.t[piv].second)) piv = k;
    }
    const int p = l.t[piv].first;
    const double a = l.t[piv].second;
    Lin e;
    e.c = -l.c / a;
    for (std::size_t k = 0; k < l.t.size(); ++k) {
      if (k != piv) e.t.emplace_back(l.t[k].first, -l.t[k].second / a);
    }
    for (int g : eliminated_) {
      Lin& eg = *expr_[g];
      auto it = std::find_if(eg.t.begin(), eg.t.end(), [p](const auto& q) { return q.first == p; });
      if (it == eg.t.end()) continue;
      const double b = it->second;
      eg.t.erase(it);
      eg.c += b * e.c;
      for (const auto& [f, v] : e.t) eg.t.emplace_back(f, b * v);
      compress(eg);
    }
    expr_[p] = std::move(e);
    eliminated_.push_back(p);
    return true;
  }

  bool eliminated(int g) const { return expr_[g].has_value(); }
  const Lin& expr(int g) const { return *expr_[g]; }

 private:
  std::vector<std::optional<Lin>> expr_;
  std::vector<int> eliminated_;
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

double min_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double eval(const AffineScalar& e, const Layout& layout, const Eigen::VectorXd& y) {
  double v = e.constant;
  for (const Term& t : e.terms) v += t.coef * y(layout.index(t.var, t.row, t.col));
  return v;
}

Solution fail(Status status, const std::string& message) {
  Solution s;
  s.status = status;
  s.message = message;
  s.objective_value = status == Status::kInfeasible ? std::numeric_limits<double>::infinity()
                                                    : -std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

Solution solve(const ConicProgram& program, const SolverSettings& settings, const Backend* backend) {
  const auto diags = validate(program);
  if (!diags.empty()) {
    std::string msg = "malformed conic program:";
    for (const auto& d : diags) msg += " " + d.message + ";";
    throw ValidationError("program", msg);
  }
  const InteriorPointBackend default_backend;
  if (backend == nullptr) backend = &default_backend;

  const Layout layout(program.variables());
  const int n_all = layout.total();

  Eliminator elim(n_all);
  for (const Equality& eq : program.equalities()) {
    if (!elim.add(layout.lower(eq.expr))) {
      return fail(Status::kInfeasible,
                  "inconsistent equality constraints" + (eq.label.empty() ? "" : " at '" + eq.label + "'"));
    }
  }

  // Reduced unknowns are the free scalars.
  std::vector<int> red_of(n_all, -1);
  std::vector<int> free_ids;
  for (int g = 0; g < n_all; ++g) {
    if (!elim.eliminated(g)) {
      red_of[g] = static_cast<int>(free_ids.size());
      free_ids.push_back(g);
    }
  }
  const int n_red = static_cast<int>(free_ids.size());
  auto reduce = [&](const AffineScalar& e) {
    Lin l = elim.substitute(layout.lower(e));
    for (auto& p : l.t) p.first = red_of[p.first];
    return l;
  };

  // PSD constraints, split into connected components.
  struct RawBlock {
    Eigen::MatrixXd constant;
    std::vector<std::vector<ReducedProblem::Entry>> by_var;  // indexed by reduced id
    std::vector<int> vars;
  };
  std::vector<RawBlock> raw_blocks;
  for (const PsdConstraint& pc : program.psd_constraints()) {
    const int m = pc.expr.rows();
    std::vector<std::vector<Lin>> ent(m, std::vector<Lin>(m));
    UnionFind uf(m);
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        ent[i][j] = reduce(pc.expr(i, j));
        if (i != j && (ent[i][j].c != 0.0 || !ent[i][j].t.empty())) uf.unite(i, j);
      }
    }
    std::vector<std::vector<int>> comps;
    std::vector<int> comp_of(m, -1);
    for (int i = 0; i < m; ++i) {
      const int r = uf.find(i);
      if (comp_of[r] < 0) {
        comp_of[r] = static_cast<int>(comps.size());
        comps.emplace_back();
      }
      comps[comp_of[r]].push_back(i);
    }
    for (const auto& idx : comps) {
      const int k = static_cast<int>(idx.size());
      RawBlock b;
      b.constant = Eigen::MatrixXd::Zero(k, k);
      std::vector<std::vector<ReducedProblem::Entry>> by_var;
      std::vector<int> vars;
      std::vector<char> seen(n_red, 0);
      std::vector<std::vector<ReducedProblem::Entry>> tmp(n_red);
      for (int a = 0; a < k; ++a) {
        for (int c = a; c < k; ++c) {
          const Lin& l = ent[idx[a]][idx[c]];
          b.constant(a, c) = b.constant(c, a) = l.c;
          for (const auto& [v, coef] : l.t) {
            if (!seen[v]) {
              seen[v] = 1;
              vars.push_back(v);
            }
            tmp[v].push_back({a, c, coef});
          }
        }
      }
      if (vars.empty()) {
        const double scale = std::max(1.0, b.constant.cwiseAbs().maxCoeff());
        if (min_eigenvalue(b.constant) < -1e-9 * scale) {
          return fail(Status::kInfeasible, "constant PSD constraint" +
                                               (pc.label.empty() ? "" : " '" + pc.label + "'") +
                                               " is not positive semidefinite");
        }
        continue;
      }
      std::sort(vars.begin(), vars.end());
      b.vars = vars;
      b.by_var.resize(vars.size());
      for (std::size_t q = 0; q < vars.size(); ++q) b.by_var[q] = std::move(tmp[vars[q]]);
      raw_blocks.push_back(std::move(b));
    }
  }

  // Objective as 0.5 x'Hx + q'x + c0.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_red, n_red);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n_red);
  double c0 = 0.0;
  {
    const Lin lin = reduce(program.objective().linear);
    c0 += lin.c;
    for (const auto& [v, a] : lin.t) q(v) += a;
    for (const SquaredTerm& sq : program.objective().squares) {
      const Lin g = reduce(sq.expr);
      const double w = sq.weight;
      c0 += w * g.c * g.c;
      for (const auto& [v, a] : g.t) {
        q(v) += 2.0 * w * g.c * a;
        for (const auto& [u, b] : g.t) H(v, u) += 2.0 * w * a * b;
      }
    }
  }

  // Drop unknowns that nothing constrains.
  std::vector<char> used(n_red, 0);
  for (const auto& b : raw_blocks)
    for (int v : b.vars) used[v] = 1;
  for (int v = 0; v < n_red; ++v) {
    if (!used[v] && H.row(v).cwiseAbs().maxCoeff() > 0.0) used[v] = 1;
    if (!used[v] && q(v) != 0.0) {
      return fail(Status::kUnbounded, "objective decreases without bound along an unconstrained direction");
    }
  }
  std::vector<int> final_of(n_red, -1);
  std::vector<int> kept;
  for (int v = 0; v < n_red; ++v) {
    if (used[v]) {
      final_of[v] = static_cast<int>(kept.size());
      kept.push_back(v);
    }
  }

  ReducedProblem rp;
  rp.num_vars = static_cast<int>(kept.size());
  rp.H.resize(rp.num_vars, rp.num_vars);
  rp.q.resize(rp.num_vars);
  for (int a = 0; a < rp.num_vars; ++a) {
    rp.q(a) = q(kept[a]);
    for (int b = 0; b < rp.num_vars; ++b) rp.H(a, b) = H(kept[a], kept[b]);
  }
  rp.c0 = c0;
  for (auto& b : raw_blocks) {
    ReducedProblem::Block blk;
    blk.size = static_cast<int>(b.constant.rows());
    blk.constant = std::move(b.constant);
    for (std::size_t k = 0; k < b.vars.size(); ++k) {
      blk.coefs.push_back({final_of[b.vars[k]], std::move(b.by_var[k])});
    }
    rp.blocks.push_back(std::move(blk));
  }

  ReducedResult rr;
  if (rp.blocks.empty()) {
    rr.x = Eigen::VectorXd::Zero(rp.num_vars);
    if (rp.num_vars > 0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(rp.H);
      rr.x = cod.solve(-rp.q);
      const double res = (rp.H * rr.x + rp.q).norm();
      if (res > 1e-9 * std::max(1.0, rp.q.norm())) {
        return fail(Status::kUnbounded, "quadratic objective is unbounded below on the equality subspace");
      }
    }
    rr.status = Status::kOptimal;
    rr.message = "solved in closed form";
  } else {
    rr = backend->solve(rp, settings);
  }

  Solution sol;
  sol.status = rr.status;
  sol.iterations = rr.iterations;
  sol.message = rr.message;
  if (rr.status == Status::kInfeasible || rr.status == Status::kUnbounded) {
    sol.objective_value = rr.status == Status::kInfeasible ? std::numeric_limits<double>::infinity()
                                                           : -std::numeric_limits<double>::infinity();
    return sol;
  }

  // Map back: reduced -> free scalars -> eliminated scalars -> variables.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_all);
  for (int v = 0; v < n_red; ++v) {
    if (final_of[v] >= 0 && rr.x.size() == rp.num_vars) y(free_ids[v]) = rr.x(final_of[v]);
  }
  for (int g = 0; g < n_all; ++g) {
    if (!elim.eliminated(g)) continue;
    const Lin& e = elim.expr(g);
    double val = e.c;
    for (const auto& [f, a] : e.t) val += a * y(f);
    y(g) = val;
  }
  const auto& vars = program.variables();
  for (int id = 0; id < static_cast<int>(vars.size()); ++id) {
    const Variable& v = vars[id];
    Eigen::MatrixXd M(v.rows, v.cols);
    for (int r = 0; r < v.rows; ++r)
      for (int c = 0; c < v.cols; ++c) M(r, c) = y(layout.index(id, r, c));
    sol.values.emplace(v.name, std::move(M));
  }

  double eq_res = 0.0;
  for (const Equality& eq : program.equalities()) eq_res = std::max(eq_res, std::abs(eval(eq.expr, layout, y)));
  sol.equality_residual = eq_res;
  double min_eig = std::numeric_limits<double>::infinity();
  for (const PsdConstraint& pc : program.psd_constraints()) {
    Eigen::MatrixXd M(pc.expr.rows(), pc.expr.cols());
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j) M(i, j) = eval(pc.expr(i, j), layout, y);
    min_eig = std::min(min_eig, min_eigenvalue(M));
  }
  sol.min_psd_eigenvalue = min_eig;
  double obj = eval(program.objective().linear, layout, y);
  for (const SquaredTerm& sq : program.objective().squares) {
    const double g = eval(sq.expr, layout, y);
    obj += sq.weight * g * g;
  }
  sol.objective_value = obj;
  if (sol.status == Status::kOptimal && (eq_res > 1e-6 || min_eig < -1e-6)) {
    sol.status = Status::kInaccurate;
    sol.message += "; residual check failed";
  }
  return sol;
}

}  // namespace dualctl::sdp
