#pragma once

#include <string_view>
#include <variant>

#include "cernn/spectral.hpp"

namespace cernn {

enum class Method { Sample, Cernn, Linear, LedoitWolf, Cnr, Rda };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

/// Parameters of the nuclear-norm MAP estimator.
///
/// `n` is the effective sample weight (a sample size, or a soft cluster weight
/// inside EM), `lambda` the prior strength and `alpha` the mixture constant
/// between the nuclear norms of the covariance and of its inverse.
struct CernnParams {
  double n = 0.0;
  double lambda = 0.0;
  double alpha = 0.5;

  // Throws InvalidInput unless n >= 0, lambda >= 0 and 0 < alpha < 1.
  void validate() const;
  // Eigenvalue favoured by the prior alone: sqrt((1 - alpha) / alpha).
  double prior_mode() const;
};

struct LinearParams {
  double gamma = 0.0;
  double rho = 0.0;
};

struct CnrParams {
  double kappa_max = 1.0;
  double tau_star = 0.0;
};

struct RdaParams {
  double gamma = 0.0;
};

using EstimateParams = std::variant<std::monostate, CernnParams, LinearParams, CnrParams, RdaParams>;

struct CovarianceEstimate {
  SymMatrix matrix;
  Method method;
  EstimateParams params;
  SpectralDecomposition spectrum;
};

// Clamps rounding-level negative eigenvalues of a PSD matrix to zero; throws
// InvalidInput when a genuinely negative eigenvalue is present.
Vector clamp_psd_spectrum(const Vector& eigenvalues);

CovarianceEstimate sample_estimate(const SymMatrix& s);

/// Shrunken eigenvalue: the positive root of
///   lambda*alpha*e^2 + n*e - n*d - lambda*(1 - alpha) = 0.
/// Returns d exactly when lambda == 0 and the prior mode exactly when n == 0.
/// Throws Underdetermined when both are zero.
double cernn_eigenvalue(double d, const CernnParams& params);
Vector cernn_eigenvalues(const Vector& d, const CernnParams& params);

CovarianceEstimate cernn_estimate(const SymMatrix& s, const CernnParams& params);
// Same estimator when the spectrum of s is already known.
CovarianceEstimate cernn_estimate(const SpectralDecomposition& s_spectrum, const CernnParams& params);

// Mixture constant whose prior mode equals tr(s)/p.
double alpha_hat(const SymMatrix& s);
double alpha_hat_from_scale(double mean_eigenvalue);

// Smallest lambda whose large-lambda expansion puts every shrunken eigenvalue
// within epsilon * prior_mode of the prior mode. Zero when every d_i already
// sits at the mode.
double lambda_max_bound(const Vector& d, double n, double alpha, double epsilon = 1e-2);

// (1 - gamma) * s + gamma * rho * I.
CovarianceEstimate linear_shrinkage(const SymMatrix& s, double gamma, double rho);

// Ledoit-Wolf shrinkage toward (tr(S)/p) I. The weight is stored as
// LinearParams::gamma and the target scale as LinearParams::rho.
CovarianceEstimate lw_estimate(const Matrix& data);

struct CnrResult {
  Vector eigenvalues;
  double tau_star = 0.0;
};

/// Condition-number-constrained maximum likelihood on a spectrum: every value
/// is clamped to [tau*, kappa_max * tau*] with tau* minimising the Gaussian
/// negative log-likelihood of the clamped spectrum. Zero eigenvalues are
/// accepted (rank-deficient S); negative ones are not.
CnrResult cnr_eigenvalues(const Vector& d, double kappa_max);
CovarianceEstimate cnr_estimate(const SymMatrix& s, double kappa_max);
CovarianceEstimate cnr_estimate(const SpectralDecomposition& s_spectrum, double kappa_max);

}  // namespace cernn
