#include "cernn/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cernn/errors.hpp"

namespace cernn {

namespace {

CovarianceEstimate from_spectrum(const SpectralDecomposition& base, Vector values, Method method,
                                 EstimateParams params) {
  SpectralDecomposition spectrum{std::move(values), base.eigenvectors};
  SymMatrix matrix(spectrum.reconstruct());
  return {std::move(matrix), method, params, std::move(spectrum)};
}

// Objective of the condition-number constrained problem at threshold tau.
double cnr_objective(const Vector& d, double tau, double kappa) {
  double total = 0.0;
  for (const double di : d) {
    const double e = std::clamp(di, tau, kappa * tau);
    total += std::log(e) + di / e;
  }
  return total;
}

// Stationary tau for the clamping pattern active at `tau`.
double cnr_stationary_tau(const Vector& d, double tau, double kappa) {
  double numerator = 0.0;
  int active = 0;
  for (const double di : d) {
    if (di <= tau) {
      numerator += di;
      ++active;
    } else if (di >= kappa * tau) {
      numerator += di / kappa;
      ++active;
    }
  }
  return active == 0 ? tau : numerator / active;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Sample: return "sample";
    case Method::Cernn: return "cernn";
    case Method::Linear: return "linear";
    case Method::LedoitWolf: return "lw";
    case Method::Cnr: return "cnr";
    case Method::Rda: return "rda";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const Method m : {Method::Sample, Method::Cernn, Method::Linear, Method::LedoitWolf,
                         Method::Cnr, Method::Rda}) {
    if (method_name(m) == name) return m;
  }
  throw InvalidInput("unknown method '" + std::string(name) + "'");
}

void CernnParams::validate() const {
  if (!(n >= 0.0) || !std::isfinite(n)) throw InvalidInput("CernnParams: n must be finite and >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidInput("CernnParams: lambda must be finite and >= 0");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("CernnParams: alpha must lie in (0, 1)");
}

double CernnParams::prior_mode() const { return std::sqrt((1.0 - alpha) / alpha); }

Vector clamp_psd_spectrum(const Vector& eigenvalues) {
  const double scale = std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  Vector out = eigenvalues;
  for (double& v : out) {
    if (v < 0.0) {
      if (v < -1e-10 * scale) {
        throw InvalidInput("matrix is not positive semidefinite (eigenvalue " + std::to_string(v) + ")");
      }
      v = 0.0;
    }
  }
  return out;
}

CovarianceEstimate sample_estimate(const SymMatrix& s) {
  return {s, Method::Sample, std::monostate{}, eig_sym(s)};
}

double cernn_eigenvalue(double d, const CernnParams& params) {
  params.validate();
  if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidInput("cernn_eigenvalue: d must be finite and >= 0");
  const auto [n, lambda, alpha] = params;
  if (lambda == 0.0) {
    if (n == 0.0) throw Underdetermined("cernn_eigenvalue: n = 0 and lambda = 0");
    return d;
  }
  if (n == 0.0) return params.prior_mode();
  // Rationalised root; avoids cancellation of -n + sqrt(n^2 + ...) for small lambda.
  const double c = n * d + lambda * (1.0 - alpha);
  return 2.0 * c / (n + std::sqrt(n * n + 4.0 * lambda * alpha * c));
}

Vector cernn_eigenvalues(const Vector& d, const CernnParams& params) {
  Vector e(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) e(i) = cernn_eigenvalue(d(i), params);
  return e;
}

CovarianceEstimate cernn_estimate(const SpectralDecomposition& s_spectrum, const CernnParams& params) {
  const Vector d = clamp_psd_spectrum(s_spectrum.eigenvalues);
  return from_spectrum(s_spectrum, cernn_eigenvalues(d, params), Method::Cernn, params);
}

CovarianceEstimate cernn_estimate(const SymMatrix& s, const CernnParams& params) {
  params.validate();
  if (params.lambda == 0.0 && params.n > 0.0) {
    return {s, Method::Cernn, params, eig_sym(s)};
  }
  return cernn_estimate(eig_sym(s), params);
}

double alpha_hat_from_scale(double mean_eigenvalue) {
  if (!(mean_eigenvalue > 0.0) || !std::isfinite(mean_eigenvalue)) {
    throw InvalidInput("alpha_hat: tr(S) must be positive");
  }
  // Below scale 1 alpha sits near 1; going through the complement keeps
  // (1 - alpha) / alpha accurate to the last bit of alpha.
  const double m2 = mean_eigenvalue * mean_eigenvalue;
  const double alpha = m2 >= 1.0 ? 1.0 / (1.0 + m2) : 1.0 - m2 / (1.0 + m2);
  if (alpha >= 1.0) throw InvalidInput("alpha_hat: tr(S)/p is too small for alpha to stay below 1");
  return alpha;
}

double alpha_hat(const SymMatrix& s) { return alpha_hat_from_scale(trace(s) / static_cast<double>(s.dim())); }

double lambda_max_bound(const Vector& d, double n, double alpha, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("lambda_max_bound: epsilon must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("lambda_max_bound: alpha must lie in (0, 1)");
  if (d.size() == 0) throw InvalidInput("lambda_max_bound: empty spectrum");
  const double mode = std::sqrt((1.0 - alpha) / alpha);
  double worst = 0.0;
  for (const double di : d) {
    worst = std::max(worst, std::abs(mode * n * di / (2.0 * (1.0 - alpha)) - n / (2.0 * alpha)));
  }
  // A spectrum sitting on the prior mode leaves only rounding noise here.
  if (worst <= 1e-12 * n / (2.0 * alpha)) return 0.0;
  return worst / (epsilon * mode);
}

CovarianceEstimate linear_shrinkage(const SymMatrix& s, double gamma, double rho) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("linear_shrinkage: gamma must lie in [0, 1]");
  if (!(rho > 0.0)) throw InvalidInput("linear_shrinkage: rho must be positive");
  const auto p = s.dim();
  SymMatrix matrix((1.0 - gamma) * s.matrix() + gamma * rho * Matrix::Identity(p, p));
  SpectralDecomposition spectrum = eig_sym(s);
  spectrum.eigenvalues = ((1.0 - gamma) * spectrum.eigenvalues.array() + gamma * rho).matrix();
  return {std::move(matrix), Method::Linear, LinearParams{gamma, rho}, std::move(spectrum)};
}

CovarianceEstimate lw_estimate(const Matrix& data) {
  const auto n = data.rows();
  const auto p = data.cols();
  if (n < 2 || p < 1) throw InvalidInput("lw_estimate: need at least 2 observations");
  const Matrix x = data.rowwise() - data.colwise().mean();
  const SymMatrix s((x.transpose() * x) / static_cast<double>(n));
  const double pd = static_cast<double>(p);
  const double m = trace(s) / pd;
  const double d2 = (s.matrix() - m * Matrix::Identity(p, p)).squaredNorm() / pd;

  SpectralDecomposition spectrum = eig_sym(s);
  if (!(d2 > 1e-14 * m * m)) {
    return {s, Method::LedoitWolf, LinearParams{0.0, m}, std::move(spectrum)};
  }
  // ||x x' - S||_F^2 = ||x||^4 - 2 x'Sx + ||S||_F^2
  const double s_norm2 = s.matrix().squaredNorm();
  double spread = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector xj = x.row(j).transpose();
    const double sq = xj.squaredNorm();
    spread += std::max(0.0, sq * sq - 2.0 * xj.dot(s.matrix() * xj) + s_norm2);
  }
  const double b2_bar = spread / (static_cast<double>(n) * static_cast<double>(n) * pd);
  const double weight = std::min(b2_bar, d2) / d2;

  SymMatrix matrix(weight * m * Matrix::Identity(p, p) + (1.0 - weight) * s.matrix());
  spectrum.eigenvalues = ((1.0 - weight) * spectrum.eigenvalues.array() + weight * m).matrix();
  return {std::move(matrix), Method::LedoitWolf, LinearParams{weight, m}, std::move(spectrum)};
}

CnrResult cnr_eigenvalues(const Vector& d, double kappa_max) {
  if (!(kappa_max >= 1.0) || !std::isfinite(kappa_max)) {
    throw InvalidInput("cnr_eigenvalues: kappa_max must be finite and >= 1");
  }
  if (d.size() == 0) throw InvalidInput("cnr_eigenvalues: empty spectrum");
  if (!d.allFinite() || d.minCoeff() < 0.0) {
    throw InvalidInput("cnr_eigenvalues: eigenvalues must be finite and nonnegative");
  }
  const double top = d.maxCoeff();
  const double bottom = d.minCoeff();
  if (!(top > 0.0)) throw InvalidInput("cnr_eigenvalues: spectrum is identically zero");
  if (bottom > 0.0 && kappa_max * bottom >= top) return {d, bottom};

  // The objective is unimodal in log(tau) and its minimiser lies in
  // [top / (kappa * p), top].
  const double pd = static_cast<double>(d.size());
  double lo = std::log(top / (kappa_max * pd));
  double hi = std::log(top);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = cnr_objective(d, std::exp(x1), kappa_max);
  double f2 = cnr_objective(d, std::exp(x2), kappa_max);
  while (hi - lo > 1e-10) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = cnr_objective(d, std::exp(x1), kappa_max);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = cnr_objective(d, std::exp(x2), kappa_max);
    }
  }
  double tau = std::exp(0.5 * (lo + hi));
  double best = cnr_objective(d, tau, kappa_max);
  // Polish with the closed-form stationary point of the active clamping pattern.
  // Near the optimum the objective is flat to rounding, so a candidate that
  // reproduces its own pattern is taken without comparing values.
  for (int iter = 0; iter < 8; ++iter) {
    const double candidate = cnr_stationary_tau(d, tau, kappa_max);
    if (candidate == tau) break;
    const double value = cnr_objective(d, candidate, kappa_max);
    const bool consistent = cnr_stationary_tau(d, candidate, kappa_max) == candidate;
    if (!consistent && !(value <= best)) break;
    tau = candidate;
    best = value;
    if (consistent) break;
  }

  Vector e(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) e(i) = std::clamp(d(i), tau, kappa_max * tau);
  return {std::move(e), tau};
}

CovarianceEstimate cnr_estimate(const SpectralDecomposition& s_spectrum, double kappa_max) {
  CnrResult r = cnr_eigenvalues(clamp_psd_spectrum(s_spectrum.eigenvalues), kappa_max);
  const double tau = r.tau_star;
  return from_spectrum(s_spectrum, std::move(r.eigenvalues), Method::Cnr, CnrParams{kappa_max, tau});
}

CovarianceEstimate cnr_estimate(const SymMatrix& s, double kappa_max) {
  return cnr_estimate(eig_sym(s), kappa_max);
}

}  // namespace cernn
