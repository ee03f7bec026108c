#include "cernn/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cernn/errors.hpp"
#include "cernn/parallel.hpp"
#include "cernn/random.hpp"

namespace cernn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix select_rows(const Matrix& data, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
  return out;
}

void check_plan(const FoldPlan& plan, Eigen::Index n) {
  if (static_cast<Eigen::Index>(plan.assignments.size()) != n) {
    throw InvalidInput("fold plan does not match the number of rows");
  }
  for (const auto size : plan.fold_sizes()) {
    if (size == 0) throw InvalidInput("fold plan has an empty fold");
  }
}

std::size_t argmin_first(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best] || (std::isnan(scores[best]) && !std::isnan(scores[i]))) best = i;
  }
  return best;
}

// Shared K-fold loop for estimators that keep the training eigenvectors and
// only remap eigenvalues. `remap(d, param, n_train, alpha)` returns the
// estimate's eigenvalues for the training spectrum d.
template <class Remap>
CvResult cv_spectral(const Matrix& data, const FoldPlan& plan, std::span<const double> grid,
                     const CvOptions& options, Remap remap) {
  if (grid.empty()) throw InvalidInput("cross-validation grid is empty");
  check_plan(plan, data.rows());
  const auto G = grid.size();
  Matrix fold_scores(plan.K, static_cast<Eigen::Index>(G));

  parallel_for(static_cast<std::size_t>(plan.K), options.threads, [&](std::size_t fold) {
    const Matrix train = select_rows(data, plan.training_rows(static_cast<int>(fold)));
    const Matrix held = select_rows(data, plan.heldout_rows(static_cast<int>(fold)));
    const Vector train_mean = column_mean(train);
    const SpectralDecomposition spectrum = eig_sym(sample_covariance(train));
    const Vector d = clamp_psd_spectrum(spectrum.eigenvalues);
    const double alpha = options.alpha ? *options.alpha : alpha_hat_from_scale(d.mean());

    Matrix centered = held;
    if (options.center == CenterMode::TrainingMean) centered.rowwise() -= train_mean.transpose();
    const double nk = static_cast<double>(held.rows());
    // Diagonal of U' S_ho U.
    const Vector projected = (centered * spectrum.eigenvectors).array().square().colwise().sum().transpose() / nk;

    for (std::size_t g = 0; g < G; ++g) {
      const Vector e = remap(d, grid[g], static_cast<double>(train.rows()), alpha);
      double score = kInf;
      if (e.minCoeff() > 0.0) {
        score = 0.5 * nk * (e.array().log().sum() + (projected.array() / e.array()).sum());
      }
      fold_scores(static_cast<Eigen::Index>(fold), static_cast<Eigen::Index>(g)) = score;
    }
  });

  CvResult result;
  result.grid.assign(grid.begin(), grid.end());
  result.mean_scores.resize(G);
  const double n = static_cast<double>(data.rows());
  for (std::size_t g = 0; g < G; ++g) {
    double total = 0.0;
    for (int k = 0; k < plan.K; ++k) total += fold_scores(k, static_cast<Eigen::Index>(g));
    result.mean_scores[g] = total / n;
  }
  result.chosen_index = argmin_first(result.mean_scores);
  result.chosen = result.grid[result.chosen_index];
  result.fold_scores = std::move(fold_scores);
  return result;
}

}  // namespace

std::vector<Eigen::Index> FoldPlan::heldout_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

std::vector<Eigen::Index> FoldPlan::training_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
  for (const int a : assignments) ++sizes[static_cast<std::size_t>(a)];
  return sizes;
}

FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed) {
  if (K < 2 || K > n) {
    throw InvalidInput("make_folds: need 2 <= K <= n (K = " + std::to_string(K) + ", n = " + std::to_string(n) + ")");
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(seed));
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan{std::vector<int>(order.size()), K, seed};
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignments[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(K));
  }
  return plan;
}

FoldPlan make_stratified_folds(std::span<const int> labels, int K, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (K < 2 || K > n) throw InvalidInput("make_stratified_folds: need 2 <= K <= n");
  const int c = *std::max_element(labels.begin(), labels.end()) + 1;
  Rng rng(mix64(seed));
  std::vector<std::size_t> order;
  order.reserve(labels.size());
  for (int k = 0; k < c; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == k) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    order.insert(order.end(), members.begin(), members.end());
  }
  FoldPlan plan{std::vector<int>(labels.size()), K, seed};
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignments[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(K));
  }
  return plan;
}

double predictive_negloglik(const CovarianceEstimate& estimate, const Matrix& heldout, const Vector& center) {
  const auto& spectrum = estimate.spectrum;
  if (heldout.cols() != spectrum.dim() || center.size() != spectrum.dim()) {
    throw InvalidInput("predictive_negloglik: dimension mismatch");
  }
  const Vector& e = spectrum.eigenvalues;
  if (!(e.minCoeff() > 0.0)) throw SingularMatrix("predictive_negloglik: estimate is not positive definite");
  const double nk = static_cast<double>(heldout.rows());
  if (heldout.rows() == 0) return 0.0;
  const Matrix centered = heldout.rowwise() - center.transpose();
  const Vector projected = (centered * spectrum.eigenvectors).array().square().colwise().sum().transpose() / nk;
  return 0.5 * nk * (e.array().log().sum() + (projected.array() / e.array()).sum());
}

std::vector<double> lambda_grid(const Vector& d, double n, double alpha, double epsilon, int size) {
  if (size < 2) throw InvalidInput("lambda_grid: size must be >= 2");
  const double top = lambda_max_bound(d, n, alpha, epsilon);
  if (!(top > 0.0)) return {0.0};
  std::vector<double> grid{0.0};
  const int points = size - 1;
  for (int i = 0; i < points; ++i) {
    // Exponents run from -4 to 0; the last point is exactly lambda_max.
    const double exponent = points == 1 ? 0.0 : -4.0 + 4.0 * static_cast<double>(i) / (points - 1);
    grid.push_back(i == points - 1 ? top : top * std::pow(10.0, exponent));
  }
  return grid;
}

std::vector<double> kappa_grid(const Vector& d, int size) {
  if (size < 2) throw InvalidInput("kappa_grid: size must be >= 2");
  const double top = d.maxCoeff();
  if (!(top > 0.0)) throw InvalidInput("kappa_grid: spectrum is identically zero");
  double bottom = top;
  for (const double v : d) {
    if (v > 1e-10 * top) bottom = std::min(bottom, v);
  }
  const double upper = top / bottom;
  if (upper <= 1.0) return {1.0};
  std::vector<double> grid;
  for (int i = 0; i < size; ++i) {
    grid.push_back(i == size - 1 ? upper : std::pow(upper, static_cast<double>(i) / (size - 1)));
  }
  return grid;
}

CvResult cv_select_lambda(const Matrix& data, const FoldPlan& plan, std::span<const double> grid,
                          const CvOptions& options) {
  return cv_spectral(data, plan, grid, options, [](const Vector& d, double lambda, double n, double alpha) {
    return cernn_eigenvalues(d, CernnParams{n, lambda, alpha});
  });
}

CvResult cv_select_lambda(const Matrix& data, int K, std::span<const double> grid, std::uint64_t seed,
                          const CvOptions& options) {
  return cv_select_lambda(data, make_folds(data.rows(), K, seed), grid, options);
}

CvResult cv_select_kappa(const Matrix& data, const FoldPlan& plan, std::span<const double> grid,
                         const CvOptions& options) {
  return cv_spectral(data, plan, grid, options, [](const Vector& d, double kappa, double, double) {
    return cnr_eigenvalues(d, kappa).eigenvalues;
  });
}

SupervisedCvResult cv_select_supervised(const Matrix& features, std::span<const int> labels, int K,
                                        const std::vector<std::vector<double>>& grids, std::uint64_t seed,
                                        const SupervisedFitter& fitter, unsigned threads) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw InvalidInput("cv_select_supervised: label count does not match row count");
  }
  if (grids.empty()) throw InvalidInput("cv_select_supervised: no parameters to select");
  for (const auto& g : grids) {
    if (g.empty()) throw InvalidInput("cv_select_supervised: empty grid");
    if (!std::is_sorted(g.begin(), g.end())) throw InvalidInput("cv_select_supervised: grids must be ascending");
  }
  const int c = *std::max_element(labels.begin(), labels.end()) + 1;
  if (c < 2) throw StratificationError("cv_select_supervised: need at least two classes");

  const FoldPlan plan = make_stratified_folds(labels, K, seed);
  struct Split {
    Matrix train, test;
    std::vector<int> train_labels, test_labels;
  };
  std::vector<Split> splits(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto& split = splits[static_cast<std::size_t>(k)];
    const auto train_rows = plan.training_rows(k);
    const auto test_rows = plan.heldout_rows(k);
    split.train = select_rows(features, train_rows);
    split.test = select_rows(features, test_rows);
    std::vector<int> seen(static_cast<std::size_t>(c), 0);
    for (const auto r : train_rows) {
      split.train_labels.push_back(labels[static_cast<std::size_t>(r)]);
      ++seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
    }
    for (const auto r : test_rows) split.test_labels.push_back(labels[static_cast<std::size_t>(r)]);
    for (int cls = 0; cls < c; ++cls) {
      if (seen[static_cast<std::size_t>(cls)] == 0) {
        throw StratificationError("cv_select_supervised: class " + std::to_string(cls) +
                                  " is missing from training fold " + std::to_string(k));
      }
    }
  }

  const auto cv_error = [&](const std::vector<double>& params) {
    std::vector<double> wrong(static_cast<std::size_t>(K), 0.0);
    parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t k) {
      const auto& split = splits[k];
      try {
        const auto predicted = fitter(split.train, split.train_labels, split.test, params);
        for (std::size_t i = 0; i < predicted.size(); ++i) {
          if (predicted[i] != split.test_labels[i]) wrong[k] += 1.0;
        }
      } catch (const SingularMatrix&) {
        wrong[k] = static_cast<double>(split.test_labels.size());
      }
    });
    double total = 0.0;
    for (const double w : wrong) total += w;
    return total / static_cast<double>(labels.size());
  };

  std::vector<double> params;
  for (const auto& g : grids) params.push_back(g[g.size() / 2]);
  double best = cv_error(params);
  for (std::size_t j = 0; j < grids.size(); ++j) {
    double best_value = params[j];
    double best_error = std::numeric_limits<double>::infinity();
    for (const double value : grids[j]) {
      params[j] = value;
      const double err = cv_error(params);
      if (err < best_error) {
        best_error = err;
        best_value = value;
      }
    }
    params[j] = best_value;
    best = best_error;
  }
  return {params, best};
}

}  // namespace cernn
