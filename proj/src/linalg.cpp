#include "eivpred/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "eivpred/errors.hpp"

namespace eiv {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Rounding in an eigensolver moves exact zeros by a small multiple of
// eps * max|lambda|; PSD checks allow this much more slack than the rank cutoff.
constexpr double kPsdSlack = 100.0;

double psd_tol(Eigen::Index dim, double rank_tol) {
  return rank_tol < 0.0 ? kPsdSlack * default_rank_tol(dim) : rank_tol;
}

double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

SymMatrix::SymMatrix(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvalidMatrix("symmetric matrix must be square and non-empty, got " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  if (!a.allFinite()) throw InvalidMatrix("matrix has non-finite entries");
  a_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zero(Eigen::Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

SymMatrix SymMatrix::diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }

SymEigen sym_eigen(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
  if (es.info() != Eigen::Success) throw InvalidMatrix("symmetric eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

double default_rank_tol(Eigen::Index dim) { return static_cast<double>(dim) * kEps; }

SymMatrix pinv(const SymMatrix& a, double rank_tol) {
  if (rank_tol < 0.0) rank_tol = default_rank_tol(a.dim());
  const SymEigen es = sym_eigen(a);
  const double cutoff = rank_tol * max_abs(es.values);
  Vector inv = Vector::Zero(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) {
    if (std::abs(es.values(i)) > cutoff) inv(i) = 1.0 / es.values(i);
  }
  return SymMatrix(es.vectors * inv.asDiagonal() * es.vectors.transpose());
}

SymMatrix sym_sqrt(const SymMatrix& a, double rank_tol) {
  const SymEigen es = sym_eigen(a);
  const double floor = -psd_tol(a.dim(), rank_tol) * max_abs(es.values);
  Vector root(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) {
    const double lambda = es.values(i);
    if (lambda < floor) {
      throw NotPSD("sym_sqrt: eigenvalue " + std::to_string(lambda) + " below tolerance");
    }
    root(i) = lambda > 0.0 ? std::sqrt(lambda) : 0.0;
  }
  return SymMatrix(es.vectors * root.asDiagonal() * es.vectors.transpose());
}

Matrix cholesky(const SymMatrix& a, double rank_tol) {
  const Eigen::Index n = a.dim();
  const Matrix& m = a.mat();
  const double scale = m.diagonal().cwiseAbs().maxCoeff();
  const double tol = psd_tol(n, rank_tol) * scale;
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (pivot < -tol) throw NotPSD("cholesky: matrix is indefinite");
    if (pivot <= tol) {
      // Zero pivot: the remainder of this Schur-complement column must vanish too.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double r = m(i, j);
        for (Eigen::Index k = 0; k < j; ++k) r -= l(i, k) * l(j, k);
        if (std::abs(r) > std::sqrt(tol * scale) + tol) {
          throw NotPSD("cholesky: matrix is indefinite");
        }
      }
      continue;
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double r = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) r -= l(i, k) * l(j, k);
      l(i, j) = r / ljj;
    }
  }
  return l;
}

bool is_psd(const SymMatrix& a, double rank_tol) {
  const SymEigen es = sym_eigen(a);
  return es.values.minCoeff() >= -psd_tol(a.dim(), rank_tol) * max_abs(es.values);
}

double condition_number(const SymMatrix& a) {
  const Vector abs_values = sym_eigen(a).values.cwiseAbs();
  const double lo = abs_values.minCoeff();
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return abs_values.maxCoeff() / lo;
}

Matrix spd_inverse(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (a.rows() == 0 || llt.info() != Eigen::Success) {
    throw SingularCovariance(std::string(what) + " is not positive definite");
  }
  const SymEigen es = sym_eigen(SymMatrix(a));
  if (es.values.minCoeff() <= default_rank_tol(a.rows()) * es.values.maxCoeff()) {
    throw SingularCovariance(std::string(what) + " is numerically singular");
  }
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace eiv
