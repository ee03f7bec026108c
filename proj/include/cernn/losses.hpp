#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cernn/random.hpp"
#include "cernn/shrinkage.hpp"

namespace cernn {

struct LossReport {
  double entropy = 0.0;
  double quadratic = 0.0;
};

// tr(T^{-1} E) - ln det(T^{-1} E) - p
double entropy_loss(const SymMatrix& estimate, const SymMatrix& truth);
// ||E T^{-1} - I||_F^2
double quadratic_loss(const SymMatrix& estimate, const SymMatrix& truth);
LossReport evaluate_losses(const SymMatrix& estimate, const SymMatrix& truth);

// n draws from N(mean, cov) using the spectral square root of cov. Consumes
// exactly n * p standard normals from rng, row by row.
Matrix sample_mvn(const Vector& mean, const SymMatrix& cov, Eigen::Index n, Rng& rng);

struct DispersionSpec {
  int p = 10;
  std::vector<int> n_list{5, 10, 20, 50, 100, 500};
  int trials = 100;
  std::uint64_t seed = 0;
};

struct DispersionTable {
  DispersionSpec spec;
  // eigenvalues[n_index][trial]: descending sample spectrum.
  std::vector<std::vector<Vector>> eigenvalues;
};

// Sample spectra of N(0, I_p) draws. Trial t at sample size index j draws from
// substream (j * trials + t).
DispersionTable dispersion_experiment(const DispersionSpec& spec, unsigned threads = 1);

struct PathPoint {
  double kappa = 1.0;
  double lambda = 0.0;     // CERNN strength with n = 1 and alpha = alpha_hat
  double kappa_max = 1.0;  // CNR bound
  double gamma = 0.0;      // linear weight with rho = mean(d)
  Vector cernn;
  Vector cnr;
  Vector linear;
};

/// For each target condition number, tunes CERNN (lambda), CNR (kappa_max) and
/// linear shrinkage (gamma) to hit it and records the resulting spectra.
/// Targets must lie in (1, d_1 / d_p] and every d_i must be positive.
std::vector<PathPoint> path_at_condition_number(const Vector& d, std::span<const double> kappa_targets);

/// Bimodal population: the high eigenvalue 1 - upsilon + upsilon * p repeated
/// for a fraction of the coordinates (or once for the singleton scenario), the
/// rest at 1 - upsilon.
struct BimodalSpec {
  int p = 125;
  std::optional<double> fraction_high;  // empty: singleton
  double upsilon = 0.1;
  double ratio = 4.0;                   // p / n
  int trials = 20;
  std::uint64_t seed = 0;

  void validate() const;
  int n() const;
  int high_count() const;
  Vector population_eigenvalues() const;
  std::string scenario_name() const;
};

struct BimodalOptions {
  std::vector<Method> methods{Method::Cernn, Method::Cnr, Method::LedoitWolf};
  int cv_folds = 10;
  int grid_size = 30;
  // CERNN mixture constant. The default 1/2 puts the prior mode at 1; empty
  // means alpha_hat(S) of each fitted sample.
  std::optional<double> alpha = 0.5;
  unsigned threads = 1;
};

struct RatioSummary {
  Method method = Method::Cernn;
  double quadratic_mean = 0.0;
  double quadratic_sd = 0.0;
  double entropy_mean = 0.0;
  double entropy_sd = 0.0;
};

struct BimodalResult {
  BimodalSpec spec;
  std::vector<Method> methods;
  // losses[trial][m] and tuning[trial][m] follow the order of `methods`; the
  // tuning value is lambda (CERNN), kappa_max (CNR) or the shrinkage weight (LW).
  std::vector<std::vector<LossReport>> losses;
  std::vector<std::vector<double>> tuning;
  std::vector<std::vector<LossReport>> ratios;
  std::vector<RatioSummary> summary;
};

// Ratios are always taken against CERNN, which is fitted even when it is not
// among the requested methods.
BimodalResult bimodal_experiment(const BimodalSpec& spec, const BimodalOptions& options = {});

}  // namespace cernn
