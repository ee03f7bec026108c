#include "cernn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cernn/errors.hpp"
#include "cernn/parallel.hpp"
#include "cernn/selection.hpp"

namespace cernn {

namespace {

// Symmetric square-root factors of an SPD matrix.
struct SpdFactors {
  Matrix inv_sqrt;
  double log_det = 0.0;
};

SpdFactors spd_factors(const SymMatrix& m, const char* who) {
  const SpectralDecomposition s = eig_sym(m);
  if (!(s.eigenvalues.minCoeff() > 0.0)) throw SingularMatrix(std::string(who) + ": matrix is not positive definite");
  SpdFactors f;
  f.inv_sqrt = s.eigenvectors * s.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * s.eigenvectors.transpose();
  f.log_det = s.eigenvalues.array().log().sum();
  return f;
}

void check_same_dim(const SymMatrix& a, const SymMatrix& b) {
  if (a.dim() != b.dim()) throw InvalidInput("loss: dimension mismatch");
}

double sample_sd(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Bisection on a monotone function of one parameter, stopping after 80 steps
// or when the bracket's relative gap falls below 1e-9. `too_loose(x)` is true
// while the condition number at x still exceeds the target.
template <class TooLoose>
double bisect(double lo, double hi, TooLoose too_loose, bool log_scale) {
  for (int iter = 0; iter < 80; ++iter) {
    if (hi - lo <= 1e-9 * std::max(std::abs(hi), 1e-300)) break;
    const double mid = log_scale ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (too_loose(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double entropy_loss(const SymMatrix& estimate, const SymMatrix& truth) {
  check_same_dim(estimate, truth);
  const SpdFactors t = spd_factors(truth, "entropy_loss");
  const SymMatrix whitened(t.inv_sqrt * estimate.matrix() * t.inv_sqrt);
  const Vector w = eig_sym(whitened).eigenvalues;
  if (!(w.minCoeff() > 0.0)) throw SingularMatrix("entropy_loss: estimate is not positive definite");
  return (w.array() - w.array().log() - 1.0).sum();
}

double quadratic_loss(const SymMatrix& estimate, const SymMatrix& truth) {
  check_same_dim(estimate, truth);
  const SpectralDecomposition t = eig_sym(truth);
  if (!(t.eigenvalues.minCoeff() > 0.0)) throw SingularMatrix("quadratic_loss: truth is not positive definite");
  const Matrix truth_inv = t.eigenvectors * t.eigenvalues.cwiseInverse().asDiagonal() * t.eigenvectors.transpose();
  const auto p = truth.dim();
  return (estimate.matrix() * truth_inv - Matrix::Identity(p, p)).squaredNorm();
}

LossReport evaluate_losses(const SymMatrix& estimate, const SymMatrix& truth) {
  return {entropy_loss(estimate, truth), quadratic_loss(estimate, truth)};
}

Matrix sample_mvn(const Vector& mean, const SymMatrix& cov, Eigen::Index n, Rng& rng) {
  const auto p = cov.dim();
  if (mean.size() != p) throw InvalidInput("sample_mvn: mean and covariance dimensions differ");
  if (n < 0) throw InvalidInput("sample_mvn: negative sample count");
  const SpectralDecomposition s = eig_sym(cov);
  const Matrix root = s.eigenvectors * clamp_psd_spectrum(s.eigenvalues).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = normal(rng);
  }
  Matrix out = z * root.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

DispersionTable dispersion_experiment(const DispersionSpec& spec, unsigned threads) {
  if (spec.p < 1 || spec.trials < 1) throw InvalidInput("dispersion_experiment: p and trials must be positive");
  for (const int n : spec.n_list) {
    if (n < 2) throw InvalidInput("dispersion_experiment: every sample size must be >= 2");
  }
  DispersionTable table{spec, {}};
  const auto sizes = spec.n_list.size();
  const auto trials = static_cast<std::size_t>(spec.trials);
  table.eigenvalues.assign(sizes, std::vector<Vector>(trials));
  const SymMatrix identity = SymMatrix::identity(spec.p);
  const Vector zero = Vector::Zero(spec.p);
  parallel_for(sizes * trials, threads, [&](std::size_t job) {
    const std::size_t j = job / trials;
    const std::size_t t = job % trials;
    Rng rng = make_substream(spec.seed, job);
    const Matrix data = sample_mvn(zero, identity, spec.n_list[j], rng);
    Vector d = eig_sym(sample_covariance(data)).eigenvalues;
    // Rank-deficient directions come back as rounding noise; report them as 0.
    const double floor = 1e-12 * std::max(1.0, d(0));
    for (double& v : d) {
      if (std::abs(v) <= floor) v = 0.0;
    }
    table.eigenvalues[j][t] = std::move(d);
  });
  return table;
}

std::vector<PathPoint> path_at_condition_number(const Vector& d, std::span<const double> kappa_targets) {
  if (d.size() == 0 || !(d.minCoeff() > 0.0)) {
    throw InvalidInput("path_at_condition_number: eigenvalues must be positive");
  }
  const double full = condition_number(d);
  const double sigma = d.mean();
  const double alpha = alpha_hat_from_scale(sigma);
  const auto cernn_at = [&](double lambda) { return cernn_eigenvalues(d, CernnParams{1.0, lambda, alpha}); };
  const auto linear_at = [&](double gamma) { return Vector(((1.0 - gamma) * d.array() + gamma * sigma).matrix()); };

  std::vector<PathPoint> out;
  for (const double kappa : kappa_targets) {
    if (!(kappa > 1.0) || kappa > full * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "path_at_condition_number: kappa " << kappa << " outside (1, " << full << "]";
      throw InvalidInput(msg.str());
    }
    PathPoint point;
    point.kappa = kappa;
    point.kappa_max = kappa;
    point.cnr = cnr_eigenvalues(d, kappa).eigenvalues;
    if (kappa >= full * (1.0 - 1e-12)) {
      point.cernn = d;
      point.linear = d;
      out.push_back(std::move(point));
      continue;
    }

    const auto cernn_loose = [&](double lambda) { return condition_number(cernn_at(lambda)) > kappa; };
    double hi = std::max(lambda_max_bound(d, 1.0, alpha), 1.0);
    while (cernn_loose(hi)) hi *= 2.0;
    double lo = hi;
    while (!cernn_loose(lo)) lo *= 0.5;
    point.lambda = bisect(lo, hi, cernn_loose, true);
    point.cernn = cernn_at(point.lambda);

    const auto linear_loose = [&](double gamma) { return condition_number(linear_at(gamma)) > kappa; };
    point.gamma = bisect(0.0, 1.0, linear_loose, false);
    point.linear = linear_at(point.gamma);
    out.push_back(std::move(point));
  }
  return out;
}

void BimodalSpec::validate() const {
  if (p < 2) throw InvalidInput("BimodalSpec: p must be >= 2");
  if (fraction_high && !(*fraction_high >= 0.0 && *fraction_high <= 0.4)) {
    throw InvalidInput("BimodalSpec: fraction_high must lie in [0, 0.4]");
  }
  if (!(upsilon > 0.0 && upsilon < 1.0)) throw InvalidInput("BimodalSpec: upsilon must lie in (0, 1)");
  if (!(ratio > 0.0)) throw InvalidInput("BimodalSpec: ratio must be positive");
  if (n() < 2) throw InvalidInput("BimodalSpec: derived sample size must be >= 2");
  if (trials < 1) throw InvalidInput("BimodalSpec: trials must be positive");
}

int BimodalSpec::n() const { return static_cast<int>(std::lround(static_cast<double>(p) / ratio)); }

int BimodalSpec::high_count() const {
  if (!fraction_high) return 1;
  return static_cast<int>(std::lround(*fraction_high * static_cast<double>(p)));
}

Vector BimodalSpec::population_eigenvalues() const {
  Vector omega = Vector::Constant(p, 1.0 - upsilon);
  omega.head(high_count()).setConstant(1.0 - upsilon + upsilon * static_cast<double>(p));
  return omega;
}

std::string BimodalSpec::scenario_name() const {
  std::ostringstream out;
  out << "p" << p << "_";
  if (fraction_high) {
    out << "high" << std::lround(*fraction_high * 100.0);
  } else {
    out << "singleton";
  }
  out << "_r" << ratio;
  return out.str();
}

BimodalResult bimodal_experiment(const BimodalSpec& spec, const BimodalOptions& options) {
  spec.validate();
  if (options.methods.empty()) throw InvalidInput("bimodal_experiment: no methods requested");
  for (const Method m : options.methods) {
    if (m != Method::Cernn && m != Method::Cnr && m != Method::LedoitWolf) {
      throw InvalidInput("bimodal_experiment: unsupported method '" + std::string(method_name(m)) + "'");
    }
  }
  if (options.alpha && !(*options.alpha > 0.0 && *options.alpha < 1.0)) {
    throw InvalidInput("bimodal_experiment: alpha must lie in (0, 1)");
  }
  const int n = spec.n();
  if (options.cv_folds < 2 || options.cv_folds > n) {
    throw InvalidInput("bimodal_experiment: cv_folds must lie in [2, n]");
  }
  const SymMatrix truth = SymMatrix::diagonal(spec.population_eigenvalues());
  const Vector zero = Vector::Zero(spec.p);
  const auto trials = static_cast<std::size_t>(spec.trials);
  const auto M = options.methods.size();

  BimodalResult result{spec, options.methods, {}, {}, {}, {}};
  result.losses.assign(trials, std::vector<LossReport>(M));
  result.tuning.assign(trials, std::vector<double>(M));
  result.ratios.assign(trials, std::vector<LossReport>(M));

  parallel_for(trials, options.threads, [&](std::size_t t) {
    const std::uint64_t trial_seed = substream_seed(spec.seed, t);
    Rng rng(trial_seed);
    const Matrix data = sample_mvn(zero, truth, n, rng);
    const FoldPlan plan = make_folds(n, options.cv_folds, mix64(trial_seed));
    const SpectralDecomposition s = eig_sym(sample_covariance(data));
    const Vector d = clamp_psd_spectrum(s.eigenvalues);

    const auto fit = [&](Method m, double& tuning) -> SymMatrix {
      switch (m) {
        case Method::Cernn: {
          const double alpha = options.alpha ? *options.alpha : alpha_hat_from_scale(d.mean());
          const auto grid = lambda_grid(d, n, alpha, 1e-2, options.grid_size);
          CvOptions cv;
          cv.alpha = options.alpha;
          tuning = cv_select_lambda(data, plan, grid, cv).chosen;
          return cernn_estimate(s, CernnParams{static_cast<double>(n), tuning, alpha}).matrix;
        }
        case Method::Cnr: {
          const auto grid = kappa_grid(d, options.grid_size);
          tuning = cv_select_kappa(data, plan, grid).chosen;
          return cnr_estimate(s, tuning).matrix;
        }
        default: {
          CovarianceEstimate est = lw_estimate(data);
          tuning = std::get<LinearParams>(est.params).gamma;
          return est.matrix;
        }
      }
    };

    double cernn_tuning = 0.0;
    const LossReport reference = evaluate_losses(fit(Method::Cernn, cernn_tuning), truth);
    for (std::size_t m = 0; m < M; ++m) {
      const Method method = options.methods[m];
      LossReport loss = reference;
      double tuning = cernn_tuning;
      if (method != Method::Cernn) loss = evaluate_losses(fit(method, tuning), truth);
      result.losses[t][m] = loss;
      result.tuning[t][m] = tuning;
      result.ratios[t][m] = method == Method::Cernn
                                ? LossReport{1.0, 1.0}
                                : LossReport{loss.entropy / reference.entropy, loss.quadratic / reference.quadratic};
    }
  });

  for (std::size_t m = 0; m < M; ++m) {
    std::vector<double> q;
    std::vector<double> e;
    for (std::size_t t = 0; t < trials; ++t) {
      q.push_back(result.ratios[t][m].quadratic);
      e.push_back(result.ratios[t][m].entropy);
    }
    RatioSummary s{options.methods[m]};
    for (std::size_t t = 0; t < trials; ++t) {
      s.quadratic_mean += q[t];
      s.entropy_mean += e[t];
    }
    s.quadratic_mean /= static_cast<double>(trials);
    s.entropy_mean /= static_cast<double>(trials);
    s.quadratic_sd = sample_sd(q, s.quadratic_mean);
    s.entropy_sd = sample_sd(e, s.entropy_mean);
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace cernn
