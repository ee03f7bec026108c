#include "cernn/spectral.hpp"

#include <cmath>
#include <string>

#include "cernn/errors.hpp"

namespace cernn {

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    throw InvalidInput("SymMatrix: expected a non-empty square matrix, got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-10 * scale) {
        throw InvalidInput("SymMatrix: input is not symmetric");
      }
    }
  }
  m_ = m.selfadjointView<Eigen::Upper>();
}

SymMatrix SymMatrix::identity(Eigen::Index p) { return SymMatrix(Matrix::Identity(p, p)); }

SymMatrix SymMatrix::diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }

Matrix SpectralDecomposition::reconstruct() const { return reconstruct(eigenvalues); }

Matrix SpectralDecomposition::reconstruct(const Vector& values) const {
  if (values.size() != eigenvalues.size()) {
    throw InvalidInput("reconstruct: eigenvalue count mismatch");
  }
  Matrix out = eigenvectors * values.asDiagonal() * eigenvectors.transpose();
  // Mirror so the result is exactly symmetric.
  return out.selfadjointView<Eigen::Upper>();
}

Vector column_mean(const Matrix& data) { return data.colwise().mean().transpose(); }

SymMatrix sample_covariance(const Matrix& data) {
  if (data.rows() < 1 || data.cols() < 1) {
    throw InvalidInput("sample_covariance: empty data");
  }
  const Matrix centered = data.rowwise() - data.colwise().mean();
  return SymMatrix((centered.transpose() * centered) / static_cast<double>(data.rows()));
}

SymMatrix pooled_covariance(const Matrix& data, std::span<const int> labels, int c) {
  const auto n = data.rows();
  if (n < 1 || data.cols() < 1) throw InvalidInput("pooled_covariance: empty data");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw InvalidInput("pooled_covariance: label count does not match row count");
  }
  if (c < 1 || n <= c) throw InvalidInput("pooled_covariance: need n > c");

  Matrix sums = Matrix::Zero(c, data.cols());
  Vector counts = Vector::Zero(c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = labels[static_cast<std::size_t>(i)];
    if (k < 0 || k >= c) throw InvalidInput("pooled_covariance: label out of range");
    sums.row(k) += data.row(i);
    counts(k) += 1.0;
  }
  for (int k = 0; k < c; ++k) {
    if (counts(k) == 0.0) {
      throw InvalidInput("pooled_covariance: class " + std::to_string(k) + " is empty");
    }
    sums.row(k) /= counts(k);
  }
  Matrix centered(n, data.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.row(i) = data.row(i) - sums.row(labels[static_cast<std::size_t>(i)]);
  }
  return SymMatrix((centered.transpose() * centered) / static_cast<double>(n - c));
}

SpectralDecomposition eig_sym(const SymMatrix& m) {
  if (!m.matrix().allFinite()) throw InvalidInput("eig_sym: non-finite entries");
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw InvalidInput("eig_sym: eigensolver did not converge");
  }
  // Eigen returns ascending order; flip to descending.
  return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

double condition_number(const Vector& values) {
  const double lo = values.minCoeff();
  if (!(lo > 0.0)) throw SingularMatrix("condition_number: smallest eigenvalue is not positive");
  return values.maxCoeff() / lo;
}

double condition_number(const SpectralDecomposition& d) { return condition_number(d.eigenvalues); }

double nuclear_norm(const SymMatrix& m) { return eig_sym(m).eigenvalues.cwiseAbs().sum(); }

double frobenius_norm(const SymMatrix& m) { return m.matrix().norm(); }

double trace(const SymMatrix& m) { return m.matrix().trace(); }

}  // namespace cernn
