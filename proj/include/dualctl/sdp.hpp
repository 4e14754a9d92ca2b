#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualctl::sdp {

/// coef * var(row, col). For symmetric variables (row, col) and (col, row)
/// name the same scalar unknown.
struct Term {
  int var = -1;
  int row = 0;
  int col = 0;
  double coef = 0.0;
};

struct AffineScalar {
  double constant = 0.0;
  std::vector<Term> terms;

  AffineScalar() = default;
  AffineScalar(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)

  AffineScalar& operator+=(const AffineScalar& o);
  AffineScalar& operator-=(const AffineScalar& o);
  AffineScalar& operator*=(double s);
  bool is_constant() const { return terms.empty(); }
};

AffineScalar operator+(AffineScalar a, const AffineScalar& b);
AffineScalar operator-(AffineScalar a, const AffineScalar& b);
AffineScalar operator*(double s, AffineScalar a);

/// Dense matrix whose entries are affine in the program variables. Used to
/// assemble LMIs and objectives in block form.
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(int rows, int cols);

  static AffineMatrix zero(int rows, int cols) { return AffineMatrix(rows, cols); }
  static AffineMatrix constant(const Eigen::MatrixXd& M);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  AffineScalar& operator()(int i, int j) { return entries_[static_cast<std::size_t>(i) * cols_ + j]; }
  const AffineScalar& operator()(int i, int j) const {
    return entries_[static_cast<std::size_t>(i) * cols_ + j];
  }

  AffineMatrix transpose() const;
  AffineMatrix block(int r0, int c0, int rows, int cols) const;
  void set_block(int r0, int c0, const AffineMatrix& b);
  Eigen::MatrixXd constant_part() const;

  AffineMatrix& operator+=(const AffineMatrix& o);
  AffineMatrix& operator-=(const AffineMatrix& o);
  AffineMatrix& operator*=(double s);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<AffineScalar> entries_;
};

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator*(double s, AffineMatrix a);
AffineMatrix operator*(const Eigen::MatrixXd& M, const AffineMatrix& a);
AffineMatrix operator*(const AffineMatrix& a, const Eigen::MatrixXd& M);

struct Variable {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool symmetric = false;
};

struct Equality {
  std::string label;
  AffineScalar expr;  // expr == 0
};

struct PsdConstraint {
  std::string label;
  AffineMatrix expr;  // expr >= 0 in the semidefinite order
};

/// weight * expr^2 with weight >= 0.
struct SquaredTerm {
  double weight = 1.0;
  AffineScalar expr;
};

/// constant + linear + sum of weighted squares: convex by construction.
struct Objective {
  AffineScalar linear;
  std::vector<SquaredTerm> squares;
};

/// Variables, affine equalities, PSD constraints and a convex quadratic
/// objective, all stored as data.
class ConicProgram {
 public:
  int add_variable(const std::string& name, int rows, int cols, bool symmetric = false);
  int find_variable(const std::string& name) const;

  /// Affine view of a whole variable (each entry a single unit term).
  AffineMatrix var(int id) const;
  AffineScalar entry(int id, int row, int col) const;

  void add_equality(AffineScalar expr, const std::string& label = "");
  /// Every entry of `expr` == 0.
  void add_equality(const AffineMatrix& expr, const std::string& label = "");
  void add_psd(AffineMatrix expr, const std::string& label = "");

  void add_objective_linear(const AffineScalar& expr);
  /// weight * ||expr||_F^2.
  void add_objective_squares(const AffineMatrix& expr, double weight = 1.0);
  void add_objective_square(const AffineScalar& expr, double weight = 1.0);
  void scale_objective(double alpha);

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Equality>& equalities() const { return equalities_; }
  const std::vector<PsdConstraint>& psd_constraints() const { return psd_; }
  const Objective& objective() const { return objective_; }

  std::vector<Variable>& mutable_variables() { return variables_; }
  std::vector<Equality>& mutable_equalities() { return equalities_; }
  std::vector<PsdConstraint>& mutable_psd_constraints() { return psd_; }
  Objective& mutable_objective() { return objective_; }

 private:
  std::vector<Variable> variables_;
  std::vector<Equality> equalities_;
  std::vector<PsdConstraint> psd_;
  Objective objective_;
};

struct Diagnostic {
  enum class Kind {
    kUndeclaredVariable,
    kIndexOutOfRange,
    kDimension,
    kAsymmetric,
    kNonConvex,
    kNonFinite,
    kDuplicateName,
  };
  Kind kind;
  std::string message;
};

/// Empty iff the program is well formed.
std::vector<Diagnostic> validate(const ConicProgram& program);

enum class Status { kOptimal, kInfeasible, kInaccurate, kUnbounded };
const char* to_string(Status s);

struct SolverSettings {
  double feas_tol = 1e-7;
  double gap_tol = 1e-7;
  int max_iterations = 500;
  bool verbose = false;
};

struct Solution {
  Status status = Status::kInaccurate;
  std::map<std::string, Eigen::MatrixXd> values;
  double objective_value = 0.0;
  double equality_residual = 0.0;
  double min_psd_eigenvalue = 0.0;
  int iterations = 0;
  std::string message;

  const Eigen::MatrixXd& value(const std::string& name) const;
  double scalar(const std::string& name) const { return value(name)(0, 0); }
};

/// Problem in reduced form handed to a backend:
///   minimize 0.5 x^T H x + q^T x + c0
///   s.t.     C_j + sum_a x_a F_ja >= 0 for every block j.
/// Equalities have already been eliminated.
struct ReducedProblem {
  struct Entry {
    int i;
    int j;  // i <= j
    double v;
  };
  struct Coefficient {
    int var;
    std::vector<Entry> entries;
  };
  struct Block {
    int size = 0;
    Eigen::MatrixXd constant;
    std::vector<Coefficient> coefs;
  };

  int num_vars = 0;
  Eigen::MatrixXd H;
  Eigen::VectorXd q;
  double c0 = 0.0;
  std::vector<Block> blocks;
};

struct ReducedResult {
  Status status = Status::kInaccurate;
  Eigen::VectorXd x;
  int iterations = 0;
  std::string message;
};

/// Seam for alternative numerical engines.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ReducedResult solve(const ReducedProblem& problem, const SolverSettings& settings) const = 0;
};

/// Dense primal-dual interior point method (Nesterov-Todd scaling with a
/// Mehrotra predictor-corrector), falling back to a phase-I feasibility
/// program to tell infeasible problems from numerical trouble.
class InteriorPointBackend final : public Backend {
 public:
  ReducedResult solve(const ReducedProblem& problem, const SolverSettings& settings) const override;
};

/// Validates, eliminates equalities, splits decoupled PSD blocks, solves, and
/// maps the answer back to named variables. Throws ValidationError on a
/// malformed program. Deterministic for identical inputs.
Solution solve(const ConicProgram& program, const SolverSettings& settings = {},
               const Backend* backend = nullptr);

/// Plain-text dump (variable table, constraints, objective) and its parser.
void dump(const ConicProgram& program, std::ostream& out);
ConicProgram load(std::istream& in);

}  // namespace dualctl::sdp
