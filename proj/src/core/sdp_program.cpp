#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "dualctl/error.hpp"
#include "dualctl/sdp.hpp"
#include "dualctl/text_format.hpp"

namespace dualctl::sdp {

// ---------------------------------------------------------------- AffineScalar

AffineScalar& AffineScalar::operator+=(const AffineScalar& o) {
  constant += o.constant;
  terms.insert(terms.end(), o.terms.begin(), o.terms.end());
  return *this;
}

AffineScalar& AffineScalar::operator-=(const AffineScalar& o) {
  constant -= o.constant;
  for (Term t : o.terms) {
    t.coef = -t.coef;
    terms.push_back(t);
  }
  return *this;
}

AffineScalar& AffineScalar::operator*=(double s) {
  constant *= s;
  for (Term& t : terms) t.coef *= s;
  return *this;
}

AffineScalar operator+(AffineScalar a, const AffineScalar& b) { return a += b; }
AffineScalar operator-(AffineScalar a, const AffineScalar& b) { return a -= b; }
AffineScalar operator*(double s, AffineScalar a) { return a *= s; }

namespace {

/// Sorts, merges duplicates and drops zero coefficients. Symmetric variables
/// are addressed through their upper triangle.
void canonicalize(AffineScalar& e, const std::vector<Variable>& vars) {
  for (Term& t : e.terms) {
    if (t.var >= 0 && t.var < static_cast<int>(vars.size()) && vars[t.var].symmetric && t.row > t.col) {
      std::swap(t.row, t.col);
    }
  }
  std::sort(e.terms.begin(), e.terms.end(), [](const Term& a, const Term& b) {
    if (a.var != b.var) return a.var < b.var;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  std::vector<Term> merged;
  merged.reserve(e.terms.size());
  for (const Term& t : e.terms) {
    if (!merged.empty() && merged.back().var == t.var && merged.back().row == t.row &&
        merged.back().col == t.col) {
      merged.back().coef += t.coef;
    } else {
      merged.push_back(t);
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(), [](const Term& t) { return t.coef == 0.0; }),
               merged.end());
  e.terms = std::move(merged);
}

}  // namespace

// ---------------------------------------------------------------- AffineMatrix

AffineMatrix::AffineMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), entries_(static_cast<std::size_t>(rows) * cols) {}

AffineMatrix AffineMatrix::constant(const Eigen::MatrixXd& M) {
  AffineMatrix a(static_cast<int>(M.rows()), static_cast<int>(M.cols()));
  for (int i = 0; i < a.rows_; ++i)
    for (int j = 0; j < a.cols_; ++j) a(i, j).constant = M(i, j);
  return a;
}

AffineMatrix AffineMatrix::transpose() const {
  AffineMatrix t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

AffineMatrix AffineMatrix::block(int r0, int c0, int rows, int cols) const {
  if (r0 < 0 || c0 < 0 || r0 + rows > rows_ || c0 + cols > cols_) {
    throw ContractViolation("AffineMatrix::block out of range");
  }
  AffineMatrix b(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
  return b;
}

void AffineMatrix::set_block(int r0, int c0, const AffineMatrix& b) {
  if (r0 < 0 || c0 < 0 || r0 + b.rows_ > rows_ || c0 + b.cols_ > cols_) {
    throw ContractViolation("AffineMatrix::set_block out of range");
  }
  for (int i = 0; i < b.rows_; ++i)
    for (int j = 0; j < b.cols_; ++j) (*this)(r0 + i, c0 + j) = b(i, j);
}

Eigen::MatrixXd AffineMatrix::constant_part() const {
  Eigen::MatrixXd M(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) M(i, j) = (*this)(i, j).constant;
  return M;
}

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ContractViolation("AffineMatrix: shape mismatch in +");
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += o.entries_[k];
  return *this;
}

AffineMatrix& AffineMatrix::operator-=(const AffineMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ContractViolation("AffineMatrix: shape mismatch in -");
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= o.entries_[k];
  return *this;
}

AffineMatrix& AffineMatrix::operator*=(double s) {
  for (auto& e : entries_) e *= s;
  return *this;
}

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) { return a += b; }
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b) { return a -= b; }
AffineMatrix operator*(double s, AffineMatrix a) { return a *= s; }

AffineMatrix operator*(const Eigen::MatrixXd& M, const AffineMatrix& a) {
  if (M.cols() != a.rows()) throw ContractViolation("AffineMatrix: shape mismatch in M * A");
  AffineMatrix out(static_cast<int>(M.rows()), a.cols());
  for (int i = 0; i < out.rows(); ++i) {
    for (int j = 0; j < out.cols(); ++j) {
      AffineScalar& e = out(i, j);
      for (int k = 0; k < a.rows(); ++k) {
        const double m = M(i, k);
        if (m == 0.0) continue;
        const AffineScalar& src = a(k, j);
        e.constant += m * src.constant;
        for (Term t : src.terms) {
          t.coef *= m;
          e.terms.push_back(t);
        }
      }
    }
  }
  return out;
}

AffineMatrix operator*(const AffineMatrix& a, const Eigen::MatrixXd& M) {
  return (M.transpose() * a.transpose()).transpose();
}

// ---------------------------------------------------------------- ConicProgram

int ConicProgram::add_variable(const std::string& name, int rows, int cols, bool symmetric) {
  variables_.push_back(Variable{name, rows, cols, symmetric});
  return static_cast<int>(variables_.size()) - 1;
}

int ConicProgram::find_variable(const std::string& name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

AffineScalar ConicProgram::entry(int id, int row, int col) const {
  AffineScalar e;
  e.terms.push_back(Term{id, row, col, 1.0});
  canonicalize(e, variables_);
  return e;
}

AffineMatrix ConicProgram::var(int id) const {
  if (id < 0 || id >= static_cast<int>(variables_.size())) {
    throw ContractViolation("ConicProgram::var: undeclared variable id " + std::to_string(id));
  }
  const Variable& v = variables_[id];
  AffineMatrix m(v.rows, v.cols);
  for (int i = 0; i < v.rows; ++i)
    for (int j = 0; j < v.cols; ++j) m(i, j) = entry(id, i, j);
  return m;
}

void ConicProgram::add_equality(AffineScalar expr, const std::string& label) {
  canonicalize(expr, variables_);
  equalities_.push_back(Equality{label, std::move(expr)});
}

void ConicProgram::add_equality(const AffineMatrix& expr, const std::string& label) {
  for (int i = 0; i < expr.rows(); ++i)
    for (int j = 0; j < expr.cols(); ++j) add_equality(expr(i, j), label);
}

void ConicProgram::add_psd(AffineMatrix expr, const std::string& label) {
  for (int i = 0; i < expr.rows(); ++i)
    for (int j = 0; j < expr.cols(); ++j) canonicalize(expr(i, j), variables_);
  psd_.push_back(PsdConstraint{label, std::move(expr)});
}

void ConicProgram::add_objective_linear(const AffineScalar& expr) {
  objective_.linear += expr;
  canonicalize(objective_.linear, variables_);
}

void ConicProgram::add_objective_square(const AffineScalar& expr, double weight) {
  SquaredTerm sq{weight, expr};
  canonicalize(sq.expr, variables_);
  if (sq.expr.terms.empty() && sq.expr.constant == 0.0) return;
  objective_.squares.push_back(std::move(sq));
}

void ConicProgram::add_objective_squares(const AffineMatrix& expr, double weight) {
  for (int i = 0; i < expr.rows(); ++i)
    for (int j = 0; j < expr.cols(); ++j) add_objective_square(expr(i, j), weight);
}

void ConicProgram::scale_objective(double alpha) {
  objective_.linear *= alpha;
  for (auto& sq : objective_.squares) sq.weight *= alpha;
}

// ---------------------------------------------------------------- validate

namespace {

void check_terms(const ConicProgram& p, const AffineScalar& e, const std::string& where,
                 std::vector<Diagnostic>& out) {
  const auto& vars = p.variables();
  if (!std::isfinite(e.constant)) {
    out.push_back({Diagnostic::Kind::kNonFinite, where + ": non-finite constant"});
  }
  for (const Term& t : e.terms) {
    if (t.var < 0 || t.var >= static_cast<int>(vars.size())) {
      out.push_back({Diagnostic::Kind::kUndeclaredVariable,
                     where + ": reference to undeclared variable #" + std::to_string(t.var)});
      continue;
    }
    const Variable& v = vars[t.var];
    if (t.row < 0 || t.col < 0 || t.row >= v.rows || t.col >= v.cols) {
      out.push_back({Diagnostic::Kind::kIndexOutOfRange,
                     where + ": entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                         ") outside variable '" + v.name + "'"});
    }
    if (!std::isfinite(t.coef)) {
      out.push_back({Diagnostic::Kind::kNonFinite, where + ": non-finite coefficient"});
    }
  }
}

bool same_affine(AffineScalar a, AffineScalar b, const std::vector<Variable>& vars) {
  canonicalize(a, vars);
  canonicalize(b, vars);
  const double scale = 1.0 + std::max(std::abs(a.constant), std::abs(b.constant));
  if (std::abs(a.constant - b.constant) > 1e-12 * scale) return false;
  if (a.terms.size() != b.terms.size()) return false;
  for (std::size_t k = 0; k < a.terms.size(); ++k) {
    const Term& x = a.terms[k];
    const Term& y = b.terms[k];
    if (x.var != y.var || x.row != y.row || x.col != y.col) return false;
    if (std::abs(x.coef - y.coef) > 1e-12 * (1.0 + std::abs(x.coef))) return false;
  }
  return true;
}

}  // namespace

std::vector<Diagnostic> validate(const ConicProgram& p) {
  std::vector<Diagnostic> out;
  const auto& vars = p.variables();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Variable& v = vars[i];
    if (v.rows < 1 || v.cols < 1) {
      out.push_back({Diagnostic::Kind::kDimension, "variable '" + v.name + "' has an empty shape"});
    }
    if (v.symmetric && v.rows != v.cols) {
      out.push_back({Diagnostic::Kind::kDimension, "symmetric variable '" + v.name + "' is not square"});
    }
    if (v.name.empty() || v.name.find_first_of(" \t\n") != std::string::npos) {
      out.push_back({Diagnostic::Kind::kDuplicateName, "variable #" + std::to_string(i) + " has an invalid name"});
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (vars[j].name == v.name) {
        out.push_back({Diagnostic::Kind::kDuplicateName, "variable name '" + v.name + "' declared twice"});
      }
    }
  }
  for (std::size_t k = 0; k < p.equalities().size(); ++k) {
    check_terms(p, p.equalities()[k].expr, "equality #" + std::to_string(k), out);
  }
  for (std::size_t k = 0; k < p.psd_constraints().size(); ++k) {
    const auto& c = p.psd_constraints()[k];
    const std::string where = "psd #" + std::to_string(k) + (c.label.empty() ? "" : " (" + c.label + ")");
    if (c.expr.rows() != c.expr.cols()) {
      out.push_back({Diagnostic::Kind::kDimension,
                     where + ": expression is " + std::to_string(c.expr.rows()) + "x" +
                         std::to_string(c.expr.cols()) + ", not square"});
      continue;
    }
    const std::size_t before = out.size();
    for (int i = 0; i < c.expr.rows(); ++i)
      for (int j = 0; j < c.expr.cols(); ++j) check_terms(p, c.expr(i, j), where, out);
    if (out.size() != before) continue;
    bool symmetric = true;
    for (int i = 0; i < c.expr.rows() && symmetric; ++i)
      for (int j = i + 1; j < c.expr.cols() && symmetric; ++j)
        symmetric = same_affine(c.expr(i, j), c.expr(j, i), vars);
    if (!symmetric) out.push_back({Diagnostic::Kind::kAsymmetric, where + ": expression is not symmetric"});
  }
  check_terms(p, p.objective().linear, "objective", out);
  for (const auto& sq : p.objective().squares) {
    check_terms(p, sq.expr, "objective square", out);
    if (!(sq.weight >= 0.0) || !std::isfinite(sq.weight)) {
      out.push_back({Diagnostic::Kind::kNonConvex, "objective square has negative or non-finite weight"});
    }
  }
  return out;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kInaccurate: return "inaccurate";
    case Status::kUnbounded: return "unbounded";
  }
  return "unknown";
}

const Eigen::MatrixXd& Solution::value(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw ContractViolation("Solution: no variable named '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------- dump / load

namespace {

std::string label_token(const std::string& s) {
  if (s.empty()) return "-";
  std::string t = s;
  for (char& c : t)
    if (c == ' ' || c == '\t' || c == '\n') c = '_';
  return t;
}

std::string label_from_token(const std::string& s) { return s == "-" ? "" : s; }

void write_affine(std::ostream& out, const AffineScalar& e, const ConicProgram& p) {
  out << format_double(e.constant) << " " << e.terms.size();
  for (const Term& t : e.terms) {
    const std::string name = (t.var >= 0 && t.var < static_cast<int>(p.variables().size()))
                                 ? p.variables()[t.var].name
                                 : "#" + std::to_string(t.var);
    out << " " << name << " " << t.row << " " << t.col << " " << format_double(t.coef);
  }
}

AffineScalar read_affine(std::istream& in, const ConicProgram& p) {
  AffineScalar e;
  std::string c;
  std::size_t n = 0;
  if (!(in >> c >> n)) throw ValidationError("program", "truncated affine expression");
  e.constant = parse_double(c);
  for (std::size_t k = 0; k < n; ++k) {
    std::string name, coef;
    Term t;
    if (!(in >> name >> t.row >> t.col >> coef)) throw ValidationError("program", "truncated term");
    t.var = name.size() > 1 && name[0] == '#' ? std::stoi(name.substr(1)) : p.find_variable(name);
    if (t.var < 0 && name[0] != '#') throw ValidationError("program", "unknown variable '" + name + "'");
    t.coef = parse_double(coef);
    e.terms.push_back(t);
  }
  return e;
}

}  // namespace

void dump(const ConicProgram& p, std::ostream& out) {
  out << "conic_program 1\n";
  for (const Variable& v : p.variables()) {
    out << "variable " << v.name << " " << v.rows << " " << v.cols << " " << (v.symmetric ? 1 : 0) << "\n";
  }
  for (const Equality& e : p.equalities()) {
    out << "equality " << label_token(e.label) << " ";
    write_affine(out, e.expr, p);
    out << "\n";
  }
  for (const PsdConstraint& c : p.psd_constraints()) {
    out << "psd " << label_token(c.label) << " " << c.expr.rows() << " " << c.expr.cols() << "\n";
    for (int i = 0; i < c.expr.rows(); ++i) {
      for (int j = 0; j < c.expr.cols(); ++j) {
        const AffineScalar& e = c.expr(i, j);
        if (e.constant == 0.0 && e.terms.empty()) continue;
        out << "  entry " << i << " " << j << " ";
        write_affine(out, e, p);
        out << "\n";
      }
    }
    out << "end_psd\n";
  }
  out << "objective_linear ";
  write_affine(out, p.objective().linear, p);
  out << "\n";
  for (const SquaredTerm& sq : p.objective().squares) {
    out << "objective_square " << format_double(sq.weight) << " ";
    write_affine(out, sq.expr, p);
    out << "\n";
  }
  out << "end\n";
}

ConicProgram load(std::istream& in) {
  ConicProgram p;
  std::string tok;
  int version = 0;
  if (!(in >> tok >> version) || tok != "conic_program" || version != 1) {
    throw ValidationError("program", "not a conic_program v1 dump");
  }
  while (in >> tok) {
    if (tok == "end") return p;
    if (tok == "variable") {
      Variable v;
      int sym = 0;
      if (!(in >> v.name >> v.rows >> v.cols >> sym)) throw ValidationError("program", "bad variable line");
      p.add_variable(v.name, v.rows, v.cols, sym != 0);
    } else if (tok == "equality") {
      std::string label;
      in >> label;
      p.mutable_equalities().push_back(Equality{label_from_token(label), read_affine(in, p)});
    } else if (tok == "psd") {
      std::string label;
      int rows = 0, cols = 0;
      if (!(in >> label >> rows >> cols)) throw ValidationError("program", "bad psd header");
      AffineMatrix m(rows, cols);
      while (in >> tok && tok == "entry") {
        int i = 0, j = 0;
        in >> i >> j;
        if (i < 0 || j < 0 || i >= rows || j >= cols) throw ValidationError("program", "psd entry out of range");
        m(i, j) = read_affine(in, p);
      }
      if (tok != "end_psd") throw ValidationError("program", "unterminated psd block");
      p.mutable_psd_constraints().push_back(PsdConstraint{label_from_token(label), std::move(m)});
    } else if (tok == "objective_linear") {
      p.mutable_objective().linear = read_affine(in, p);
    } else if (tok == "objective_square") {
      std::string w;
      in >> w;
      SquaredTerm sq;
      sq.weight = parse_double(w);
      sq.expr = read_affine(in, p);
      p.mutable_objective().squares.push_back(std::move(sq));
    } else {
      throw ValidationError("program", "unexpected token '" + tok + "'");
    }
  }
  throw ValidationError("program", "missing 'end'");
}

}  // namespace dualctl::sdp
