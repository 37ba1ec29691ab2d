#pragma once

#include <Eigen/Dense>

namespace eiv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric matrix. Construction symmetrizes the input, so entry (i, j)
/// and entry (j, i) are bitwise equal for the lifetime of the object.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Throws InvalidMatrix for non-square, empty, or non-finite input.
  explicit SymMatrix(const Matrix& a);

  static SymMatrix identity(Eigen::Index dim);
  static SymMatrix zero(Eigen::Index dim);
  static SymMatrix diagonal(const Vector& diag);

  Eigen::Index dim() const { return a_.rows(); }
  const Matrix& mat() const { return a_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }

 private:
  Matrix a_;
};

/// Symmetric eigendecomposition, eigenvalues ascending.
struct SymEigen {
  Vector values;
  Matrix vectors;
};

SymEigen sym_eigen(const SymMatrix& a);

/// Relative eigenvalue cutoff used when none is supplied: dim * machine epsilon.
double default_rank_tol(Eigen::Index dim);

/// Moore-Penrose pseudo-inverse. Eigenvalues with |lambda| <= rank_tol * max|lambda|
/// are treated as zero. A negative rank_tol selects default_rank_tol.
SymMatrix pinv(const SymMatrix& a, double rank_tol = -1.0);

/// PSD square root. Eigenvalues in [-tol * max|lambda|, 0) are clamped to zero,
/// anything more negative throws NotPSD.
SymMatrix sym_sqrt(const SymMatrix& a, double rank_tol = -1.0);

/// Lower-triangular L with L * L^T = a. Semidefinite input is accepted: a pivot
/// that vanishes to tolerance yields a zero column.
Matrix cholesky(const SymMatrix& a, double rank_tol = -1.0);

bool is_psd(const SymMatrix& a, double rank_tol = -1.0);

/// Ratio of largest to smallest absolute eigenvalue (infinity when singular).
double condition_number(const SymMatrix& a);

/// Inverse of a matrix expected to be symmetric positive definite.
/// Throws SingularCovariance when it is not.
Matrix spd_inverse(const Matrix& a, const char* what);

}  // namespace eiv
