#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cernn/random.hpp"
#include "cernn/selection.hpp"
#include "cernn/shrinkage.hpp"

namespace cernn {

struct GaussianClass {
  double prior = 1.0;
  Vector mean;
  CovarianceEstimate covariance;
};

enum class Discriminant {
  Gaussian,  // ln pi_k - ln det(Sigma_k) / 2 - Mahalanobis^2 / 2
  Linear,    // x' Sigma_k^{-1} mu_k - mu_k' Sigma_k^{-1} mu_k + ln pi_k
};

struct QdaModel {
  std::vector<GaussianClass> classes;
  Discriminant discriminant = Discriminant::Gaussian;

  Eigen::Index dim() const;
  Vector scores(const Vector& x) const;
  // argmax of scores; ties go to the smallest class id.
  int predict(const Vector& x) const;
  std::vector<int> predict(const Matrix& rows) const;
};

// One CERNN-shrunken covariance per class with alpha_k = alpha_hat(S_k) and
// n = class size. Labels are ids in [0, lambdas.size()); every class needs at
// least two rows. Throws SingularMatrix when a class covariance is not SPD.
QdaModel fit_qda(const Matrix& features, std::span<const int> labels, std::span<const double> lambdas);

// gamma * S_k + (1 - gamma) * pooled covariance.
QdaModel fit_rda(const Matrix& features, std::span<const int> labels, double gamma);

int predict_qda(const QdaModel& model, const Vector& x);

// Fitters for cv_select_supervised: one lambda per class, or a single gamma.
SupervisedFitter cernn_qda_fitter(Discriminant discriminant = Discriminant::Gaussian);
SupervisedFitter rda_fitter();

// Row indices of k-means++ seeds (D^2 weighting).
std::vector<Eigen::Index> kmeanspp_init(const Matrix& data, int c, Rng& rng);

struct Responsibilities {
  Matrix w;             // n x c
  Vector column_sums;   // w_k
};

struct MixtureState {
  std::vector<GaussianClass> classes;
  int iteration = 0;
  double objective = 0.0;
};

struct EmOptions {
  int clusters = 1;
  double lambda = 0.0;
  int restarts = 1;
  int max_iter = 500;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Stop re-estimating alpha_k after this many iterations (negative: never).
  int freeze_alpha_after = -1;
};

struct EmRun {
  MixtureState state;
  Responsibilities responsibilities;
  double expected_loglik = 0.0;
  // Penalized objective after initialisation (index 0) and after each iteration.
  std::vector<double> objective_trace;
  bool converged = false;
};

struct EmResult {
  EmRun best;
  std::size_t best_restart = 0;
  std::size_t failed_restarts = 0;
  // Expected complete-data log-likelihood per restart (-inf when it failed).
  std::vector<double> restart_scores;
};

/// Log-space E-step: w_ik proportional to pi_k phi(y_i | mu_k, Sigma_k).
Responsibilities e_step(const MixtureState& state, const Matrix& data);

/// Observed-data log-likelihood minus the nuclear-norm log-prior of every
/// component, with alpha_k read from the component's CERNN parameters.
double penalized_objective(const MixtureState& state, const Matrix& data, double lambda);

// sum_i sum_k w_ik [ln pi_k + ln phi(y_i | mu_k, Sigma_k)]
double expected_complete_loglik(const MixtureState& state, const Responsibilities& r, const Matrix& data);

// One EM run from the given initial means.
EmRun em_run(const Matrix& data, const std::vector<Vector>& initial_means, const EmOptions& options);

/// Restarts from independent k-means++ seeds (restart r uses substream r of
/// options.seed) and keeps the run with the greatest expected complete-data
/// log-likelihood; ties go to the lowest restart index. Restarts that hit a
/// degenerate covariance are discarded.
EmResult em_cluster(const Matrix& data, const EmOptions& options);

std::vector<int> hard_assignments(const Responsibilities& r);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

struct ModelMeta {
  Eigen::Index p = 0;
  int c = 0;
  std::uint64_t seed = 0;
};

// JSON {classes:[{prior, mean, covariance, lambda, alpha}], meta:{p, c, seed}};
// reals printed with 17 significant digits, covariance row-major.
std::string model_to_json(const std::vector<GaussianClass>& classes, const ModelMeta& meta);
std::vector<GaussianClass> model_from_json(const std::string& text, ModelMeta* meta = nullptr);

}  // namespace cernn
