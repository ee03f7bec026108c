#pragma once

#include <span>

#include <Eigen/Dense>

namespace cernn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric matrix. Symmetry is enforced on construction: the input is
/// checked to be symmetric up to rounding and then mirrored from its upper
/// triangle, so entry (i, j) and (j, i) are bitwise equal afterwards.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(Eigen::Index p);
  static SymMatrix diagonal(const Vector& diag);

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending and column i
/// of `eigenvectors` paired with `eigenvalues[i]`.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Eigen::Index dim() const { return eigenvalues.size(); }
  Matrix reconstruct() const;
  // Same eigenvectors, replacement eigenvalues (must keep length p).
  Matrix reconstruct(const Vector& values) const;
};

// Maximum-likelihood covariance, divisor n.
SymMatrix sample_covariance(const Matrix& data);

// Class-centred scatter over n - c. Labels are class ids in [0, c).
SymMatrix pooled_covariance(const Matrix& data, std::span<const int> labels, int c);

SpectralDecomposition eig_sym(const SymMatrix& m);

double condition_number(const SpectralDecomposition& d);
double condition_number(const Vector& descending_eigenvalues);

double nuclear_norm(const SymMatrix& m);
double frobenius_norm(const SymMatrix& m);
double trace(const SymMatrix& m);

// Column means of an n x p data matrix.
Vector column_mean(const Matrix& data);

}  // namespace cernn
