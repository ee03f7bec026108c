#include "cernn/applications.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "cernn/errors.hpp"
#include "cernn/parallel.hpp"

namespace cernn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_spd(const CovarianceEstimate& est, const std::string& who) {
  if (!(est.spectrum.eigenvalues.minCoeff() > 0.0)) {
    throw SingularMatrix(who + ": covariance is not positive definite");
  }
}

// ln phi(x | mu, Sigma) from the cached spectrum of Sigma.
double log_density(const Vector& x, const GaussianClass& g) {
  const auto& s = g.covariance.spectrum;
  const Vector z = s.eigenvectors.transpose() * (x - g.mean);
  const double quad = (z.array().square() / s.eigenvalues.array()).sum();
  const double p = static_cast<double>(x.size());
  return -0.5 * (p * std::log(2.0 * std::numbers::pi) + s.eigenvalues.array().log().sum() + quad);
}

// n x c matrix of ln pi_k + ln phi(y_i | mu_k, Sigma_k).
Matrix weighted_log_densities(const MixtureState& state, const Matrix& data) {
  const auto c = static_cast<Eigen::Index>(state.classes.size());
  Matrix out(data.rows(), c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const auto& g = state.classes[static_cast<std::size_t>(k)];
    const double log_prior = g.prior > 0.0 ? std::log(g.prior) : kNegInf;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      out(i, k) = log_prior == kNegInf ? kNegInf : log_prior + log_density(data.row(i).transpose(), g);
    }
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double top = row.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((row.array() - top).exp().sum());
}

std::vector<std::vector<Eigen::Index>> group_rows(std::span<const int> labels, int c, Eigen::Index n) {
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidInput("label count does not match row count");
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c) throw InvalidInput("label " + std::to_string(labels[i]) + " out of range");
    groups[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  return groups;
}

Matrix rows_of(const Matrix& data, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
  return out;
}

double alpha_of(const GaussianClass& g) {
  if (const auto* p = std::get_if<CernnParams>(&g.covariance.params)) return p->alpha;
  return 0.5;
}

void m_step(MixtureState& state, const Responsibilities& r, const Matrix& data, double lambda, bool update_alpha) {
  const double n = static_cast<double>(data.rows());
  for (std::size_t k = 0; k < state.classes.size(); ++k) {
    auto& g = state.classes[k];
    const auto col = static_cast<Eigen::Index>(k);
    const double wk = r.column_sums(col);
    g.prior = wk / n;
    if (wk < 1e-12) continue;
    g.mean = (data.transpose() * r.w.col(col)) / wk;
    const Matrix centered = data.rowwise() - g.mean.transpose();
    const SymMatrix scatter((centered.transpose() * r.w.col(col).asDiagonal() * centered) / wk);
    const double alpha = update_alpha ? alpha_hat(scatter) : alpha_of(g);
    g.covariance = cernn_estimate(scatter, CernnParams{wk, lambda, alpha});
    require_spd(g.covariance, "em_cluster");
  }
}

}  // namespace

Eigen::Index QdaModel::dim() const { return classes.empty() ? 0 : classes.front().mean.size(); }

Vector QdaModel::scores(const Vector& x) const {
  if (x.size() != dim()) throw InvalidInput("QdaModel: feature dimension mismatch");
  Vector out(static_cast<Eigen::Index>(classes.size()));
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& g = classes[k];
    const double log_prior = g.prior > 0.0 ? std::log(g.prior) : kNegInf;
    if (discriminant == Discriminant::Gaussian) {
      out(static_cast<Eigen::Index>(k)) = log_prior + log_density(x, g);
    } else {
      const auto& s = g.covariance.spectrum;
      const Vector precision_mean = s.eigenvectors * (s.eigenvalues.cwiseInverse().asDiagonal() *
                                                      (s.eigenvectors.transpose() * g.mean));
      out(static_cast<Eigen::Index>(k)) = x.dot(precision_mean) - g.mean.dot(precision_mean) + log_prior;
    }
  }
  return out;
}

int QdaModel::predict(const Vector& x) const {
  const Vector s = scores(x);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < s.size(); ++k) {
    if (s(k) > s(best)) best = k;
  }
  return static_cast<int>(best);
}

std::vector<int> QdaModel::predict(const Matrix& rows) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back(predict(Vector(rows.row(i).transpose())));
  return out;
}

int predict_qda(const QdaModel& model, const Vector& x) { return model.predict(x); }

QdaModel fit_qda(const Matrix& features, std::span<const int> labels, std::span<const double> lambdas) {
  const int c = static_cast<int>(lambdas.size());
  if (c < 1) throw InvalidInput("fit_qda: need at least one class");
  const auto groups = group_rows(labels, c, features.rows());
  QdaModel model;
  for (int k = 0; k < c; ++k) {
    const auto& rows = groups[static_cast<std::size_t>(k)];
    if (rows.size() < 2) throw InvalidInput("fit_qda: class " + std::to_string(k) + " has fewer than 2 samples");
    const Matrix x = rows_of(features, rows);
    const SymMatrix s = sample_covariance(x);
    const CernnParams params{static_cast<double>(rows.size()), lambdas[static_cast<std::size_t>(k)], alpha_hat(s)};
    GaussianClass g{static_cast<double>(rows.size()) / static_cast<double>(features.rows()), column_mean(x),
                    cernn_estimate(s, params)};
    require_spd(g.covariance, "fit_qda");
    model.classes.push_back(std::move(g));
  }
  return model;
}

QdaModel fit_rda(const Matrix& features, std::span<const int> labels, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("fit_rda: gamma must lie in [0, 1]");
  if (labels.empty()) throw InvalidInput("fit_rda: no labels");
  const int c = *std::max_element(labels.begin(), labels.end()) + 1;
  const auto groups = group_rows(labels, c, features.rows());
  const SymMatrix pooled = pooled_covariance(features, labels, c);
  QdaModel model;
  for (int k = 0; k < c; ++k) {
    const Matrix x = rows_of(features, groups[static_cast<std::size_t>(k)]);
    const SymMatrix blended(gamma * sample_covariance(x).matrix() + (1.0 - gamma) * pooled.matrix());
    GaussianClass g{static_cast<double>(x.rows()) / static_cast<double>(features.rows()), column_mean(x),
                    CovarianceEstimate{blended, Method::Rda, RdaParams{gamma}, eig_sym(blended)}};
    require_spd(g.covariance, "fit_rda");
    model.classes.push_back(std::move(g));
  }
  return model;
}

SupervisedFitter cernn_qda_fitter(Discriminant discriminant) {
  return [discriminant](const Matrix& train, std::span<const int> labels, const Matrix& test,
                        std::span<const double> lambdas) {
    QdaModel model = fit_qda(train, labels, lambdas);
    model.discriminant = discriminant;
    return model.predict(test);
  };
}

SupervisedFitter rda_fitter() {
  return [](const Matrix& train, std::span<const int> labels, const Matrix& test, std::span<const double> params) {
    return fit_rda(train, labels, params[0]).predict(test);
  };
}

std::vector<Eigen::Index> kmeanspp_init(const Matrix& data, int c, Rng& rng) {
  const auto n = data.rows();
  if (c < 1 || c > n) throw InvalidInput("kmeanspp_init: need 1 <= c <= n");
  std::vector<Eigen::Index> chosen;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  const auto pick_uniform_untaken = [&] {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> u(0, free.size() - 1);
    return free[u(rng)];
  };
  const auto take = [&](Eigen::Index i) {
    chosen.push_back(i);
    taken[static_cast<std::size_t>(i)] = true;
  };

  take(pick_uniform_untaken());
  Vector dist2 = (data.rowwise() - data.row(chosen.back())).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < c) {
    for (const auto i : chosen) dist2(i) = 0.0;
    const double total = dist2.sum();
    Eigen::Index next = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (dist2(i) > 0.0 && acc >= target) {
          next = i;
          break;
        }
      }
      if (next < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (dist2(i) > 0.0) {
            next = i;
            break;
          }
        }
      }
    } else {
      next = pick_uniform_untaken();
    }
    take(next);
    dist2 = dist2.cwiseMin((data.rowwise() - data.row(next)).rowwise().squaredNorm());
  }
  return chosen;
}

Responsibilities e_step(const MixtureState& state, const Matrix& data) {
  const Matrix logs = weighted_log_densities(state, data);
  Responsibilities r{Matrix(logs.rows(), logs.cols()), Vector::Zero(logs.cols())};
  for (Eigen::Index i = 0; i < logs.rows(); ++i) {
    const double lse = log_sum_exp(logs.row(i));
    if (!std::isfinite(lse)) throw SingularMatrix("e_step: observation has zero density under every component");
    r.w.row(i) = (logs.row(i).array() - lse).exp();
    r.w.row(i) /= r.w.row(i).sum();
  }
  r.column_sums = r.w.colwise().sum().transpose();
  return r;
}

double penalized_objective(const MixtureState& state, const Matrix& data, double lambda) {
  const Matrix logs = weighted_log_densities(state, data);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logs.rows(); ++i) total += log_sum_exp(logs.row(i));
  if (lambda > 0.0) {
    double penalty = 0.0;
    for (const auto& g : state.classes) {
      const double alpha = alpha_of(g);
      const Vector& e = g.covariance.spectrum.eigenvalues;
      penalty += alpha * e.sum() + (1.0 - alpha) * e.cwiseInverse().sum();
    }
    total -= 0.5 * lambda * penalty;
  }
  return total;
}

double expected_complete_loglik(const MixtureState& state, const Responsibilities& r, const Matrix& data) {
  const Matrix logs = weighted_log_densities(state, data);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logs.rows(); ++i) {
    for (Eigen::Index k = 0; k < logs.cols(); ++k) {
      if (r.w(i, k) > 0.0) total += r.w(i, k) * logs(i, k);
    }
  }
  return total;
}

EmRun em_run(const Matrix& data, const std::vector<Vector>& initial_means, const EmOptions& options) {
  const auto n = data.rows();
  const int c = static_cast<int>(initial_means.size());
  if (c < 1 || c > n) throw InvalidInput("em_run: need 1 <= c <= n");
  if (!(options.lambda >= 0.0)) throw InvalidInput("em_run: lambda must be >= 0");

  // Every component starts from the (shrunken) covariance of the whole sample.
  const SymMatrix s = sample_covariance(data);
  const CovarianceEstimate start = cernn_estimate(s, CernnParams{static_cast<double>(n), options.lambda, alpha_hat(s)});
  require_spd(start, "em_cluster");

  EmRun run;
  for (const auto& mu : initial_means) {
    if (mu.size() != data.cols()) throw InvalidInput("em_run: initial mean has the wrong dimension");
    run.state.classes.push_back(GaussianClass{1.0 / c, mu, start});
  }
  run.state.objective = penalized_objective(run.state, data, options.lambda);
  run.objective_trace.push_back(run.state.objective);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    run.responsibilities = e_step(run.state, data);
    const bool update_alpha = options.freeze_alpha_after < 0 || iter <= options.freeze_alpha_after;
    m_step(run.state, run.responsibilities, data, options.lambda, update_alpha);
    run.state.iteration = iter;
    const double previous = run.state.objective;
    run.state.objective = penalized_objective(run.state, data, options.lambda);
    run.objective_trace.push_back(run.state.objective);
    if (!std::isfinite(run.state.objective)) throw SingularMatrix("em_cluster: objective is not finite");
    if (std::abs(run.state.objective - previous) <= options.tol * std::abs(previous)) {
      run.converged = true;
      break;
    }
  }
  run.responsibilities = e_step(run.state, data);
  run.expected_loglik = expected_complete_loglik(run.state, run.responsibilities, data);
  return run;
}

EmResult em_cluster(const Matrix& data, const EmOptions& options) {
  if (options.clusters < 1) throw InvalidInput("em_cluster: need at least one cluster");
  if (options.clusters > data.rows()) throw InvalidInput("em_cluster: more clusters than observations");
  if (options.restarts < 1) throw InvalidInput("em_cluster: restarts must be >= 1");
  if (!(options.lambda >= 0.0)) throw InvalidInput("em_cluster: lambda must be >= 0");
  if (!data.allFinite()) throw InvalidInput("em_cluster: data must be finite");

  const auto restarts = static_cast<std::size_t>(options.restarts);
  std::vector<std::optional<EmRun>> runs(restarts);
  parallel_for(restarts, options.threads, [&](std::size_t r) {
    Rng rng = make_substream(options.seed, r);
    std::vector<Vector> means;
    for (const auto i : kmeanspp_init(data, options.clusters, rng)) means.emplace_back(data.row(i).transpose());
    try {
      EmRun run = em_run(data, means, options);
      if (std::isfinite(run.expected_loglik)) runs[r] = std::move(run);
    } catch (const SingularMatrix&) {
    } catch (const Underdetermined&) {
    } catch (const InvalidInput&) {
      // alpha_hat of a collapsed component leaves (0, 1)
    }
  });

  EmResult result;
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    if (!runs[r]) {
      ++result.failed_restarts;
      result.restart_scores.push_back(kNegInf);
      continue;
    }
    result.restart_scores.push_back(runs[r]->expected_loglik);
    if (!best || runs[r]->expected_loglik > runs[*best]->expected_loglik) best = r;
  }
  if (!best) throw SingularMatrix("em_cluster: every restart degenerated; try a larger lambda");
  result.best_restart = *best;
  result.best = std::move(*runs[*best]);
  return result;
}

std::vector<int> hard_assignments(const Responsibilities& r) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(r.w.rows()));
  for (Eigen::Index i = 0; i < r.w.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < r.w.cols(); ++k) {
      if (r.w(i, k) > r.w(i, best)) best = k;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidInput("adjusted_rand_index: label vectors differ in length");
  if (a.empty()) throw InvalidInput("adjusted_rand_index: empty labelling");
  const int ra = *std::max_element(a.begin(), a.end()) + 1;
  const int rb = *std::max_element(b.begin(), b.end()) + 1;
  if (*std::min_element(a.begin(), a.end()) < 0 || *std::min_element(b.begin(), b.end()) < 0) {
    throw InvalidInput("adjusted_rand_index: labels must be nonnegative");
  }
  Matrix table = Matrix::Zero(ra, rb);
  for (std::size_t i = 0; i < a.size(); ++i) table(a[i], b[i]) += 1.0;
  const auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0;
  for (Eigen::Index i = 0; i < ra; ++i) {
    for (Eigen::Index j = 0; j < rb; ++j) index += pairs(table(i, j));
  }
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (Eigen::Index i = 0; i < ra; ++i) sum_a += pairs(table.row(i).sum());
  for (Eigen::Index j = 0; j < rb; ++j) sum_b += pairs(table.col(j).sum());
  const double expected = sum_a * sum_b / pairs(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace cernn
