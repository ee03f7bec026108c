#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cernn/shrinkage.hpp"

namespace cernn {

/// Assignment of n rows to K folds.
struct FoldPlan {
  std::vector<int> assignments;
  int K = 0;
  std::uint64_t seed = 0;

  std::vector<Eigen::Index> heldout_rows(int fold) const;
  std::vector<Eigen::Index> training_rows(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Shuffled balanced folds; sizes differ by at most one. Requires 2 <= K <= n.
FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed);
// Per-class shuffled folds so every class with >= 2 members reaches every
// training split.
FoldPlan make_stratified_folds(std::span<const int> labels, int K, std::uint64_t seed);

enum class CenterMode {
  TrainingMean,  // held-out rows centred by the training-fold mean
  Zero,          // raw second moments
};

struct CvOptions {
  CenterMode center = CenterMode::TrainingMean;
  // Fixed mixture constant; empty means alpha_hat of each training fold.
  std::optional<double> alpha;
  unsigned threads = 1;
};

struct CvResult {
  std::vector<double> grid;
  std::vector<double> mean_scores;
  double chosen = 0.0;
  std::size_t chosen_index = 0;
  // K x grid.size() matrix of per-fold held-out scores.
  Matrix fold_scores;
};

/// Held-out Gaussian negative log-likelihood
///   (n_k / 2) * (ln det Sigma + tr(S_ho Sigma^{-1}))
/// with S_ho the second-moment matrix of `heldout` about `center`.
double predictive_negloglik(const CovarianceEstimate& estimate, const Matrix& heldout, const Vector& center);

// {0} followed by size - 1 log-spaced points over [1e-4, 1] * lambda_max_bound.
std::vector<double> lambda_grid(const Vector& d, double n, double alpha, double epsilon, int size);

// Log-spaced kappa_max grid from 1 to the condition number of the positive
// part of d (values below 1e-10 * d_1 are treated as zero).
std::vector<double> kappa_grid(const Vector& d, int size);

CvResult cv_select_lambda(const Matrix& data, int K, std::span<const double> grid, std::uint64_t seed,
                          const CvOptions& options = {});
CvResult cv_select_lambda(const Matrix& data, const FoldPlan& plan, std::span<const double> grid,
                          const CvOptions& options = {});

// Same protocol with the condition-number-constrained estimator over kappa_max.
CvResult cv_select_kappa(const Matrix& data, const FoldPlan& plan, std::span<const double> grid,
                         const CvOptions& options = {});

/// Predicts labels for `test` after fitting on (`train`, `train_labels`) with
/// one parameter per coordinate.
using SupervisedFitter = std::function<std::vector<int>(const Matrix& train, std::span<const int> train_labels,
                                                        const Matrix& test, std::span<const double> params)>;

struct SupervisedCvResult {
  std::vector<double> params;
  double cv_error = 0.0;
};

/// Stratified K-fold misclassification search. Each coordinate has its own
/// ascending grid; a single pass of coordinate descent visits coordinates in
/// order, holding the rest at their current best (initially the grid
/// midpoint). A fit that fails with SingularMatrix counts as error 1.
SupervisedCvResult cv_select_supervised(const Matrix& features, std::span<const int> labels, int K,
                                        const std::vector<std::vector<double>>& grids, std::uint64_t seed,
                                        const SupervisedFitter& fitter, unsigned threads = 1);

}  // namespace cernn
