#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "../support/oracles.hpp"
#include "cernn/applications.hpp"
#include "cernn/errors.hpp"
#include "cernn/selection.hpp"

using namespace cernn;

TEST_CASE("fold plans are balanced and reproducible") {
  auto sizes = make_folds(10, 5, 1).fold_sizes();
  CHECK(std::all_of(sizes.begin(), sizes.end(), [](auto s) { return s == 2; }));

  sizes = make_folds(7, 3, 1).fold_sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 3});

  CHECK(make_folds(50, 7, 99).assignments == make_folds(50, 7, 99).assignments);
  CHECK(make_folds(50, 7, 99).assignments != make_folds(50, 7, 100).assignments);

  CHECK_THROWS_AS(make_folds(4, 5, 0), InvalidInput);
  CHECK_THROWS_AS(make_folds(4, 1, 0), InvalidInput);

  const auto plan = make_folds(11, 4, 3);
  std::vector<Eigen::Index> all;
  for (int k = 0; k < 4; ++k) {
    const auto h = plan.heldout_rows(k);
    CHECK(h.size() + plan.training_rows(k).size() == 11);
    all.insert(all.end(), h.begin(), h.end());
  }
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 11; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("stratified folds keep every class in every training split") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 4 + 3 * c, c);
  const auto plan = make_stratified_folds(labels, 4, 8);
  for (int k = 0; k < 4; ++k) {
    std::vector<int> seen(3, 0);
    for (const auto i : plan.training_rows(k)) seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]++;
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s > 0; }));
  }
  auto sizes = plan.fold_sizes();
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
}

TEST_CASE("predictive negative log-likelihood") {
  const auto identity = sample_estimate(SymMatrix::identity(2));
  CHECK(predictive_negloglik(identity, Matrix(0, 2), Vector::Zero(2)) == 0.0);
  Matrix row(1, 2);
  row << 1, 1;
  CHECK(predictive_negloglik(identity, row, Vector::Zero(2)) == doctest::Approx(1.0));

  std::mt19937_64 rng(61);
  for (int t = 0; t < 10; ++t) {
    const Matrix sigma = oracle::random_spd(4, rng);
    const Matrix held = oracle::gaussian_rows(6, 4, rng);
    const Vector center = oracle::gaussian_rows(1, 4, rng).row(0).transpose();
    const auto est = sample_estimate(SymMatrix(sigma));
    const double got = predictive_negloglik(est, held, center);
    CHECK(got == doctest::Approx(oracle::heldout_nll(sigma, held, center)).epsilon(1e-10));

    // scaling Sigma by c shifts the score by (n_k/2)(p ln c + (1/c - 1) tr(S Sigma^-1))
    const double c = 2.7;
    const Matrix centered = held.rowwise() - center.transpose();
    const double tr = (sigma.llt().solve(centered.transpose() * centered / 6.0)).trace();
    const double shifted = predictive_negloglik(sample_estimate(SymMatrix(Matrix(c * sigma))), held, center);
    CHECK(shifted - got == doctest::Approx(3.0 * (4 * std::log(c) + (1 / c - 1) * tr)).epsilon(1e-9));

    const Matrix q = oracle::random_orthogonal(4, rng);
    const auto rotated = sample_estimate(SymMatrix(Matrix(q * sigma * q.transpose())));
    CHECK(std::abs(predictive_negloglik(rotated, held * q.transpose(), q * center) - got) <= 1e-8 * (1 + std::abs(got)));
  }

  Vector d(2);
  d << 1.0, 0.0;
  CHECK_THROWS_AS(predictive_negloglik(sample_estimate(SymMatrix::diagonal(d)), row, Vector::Zero(2)), SingularMatrix);
}

TEST_CASE("lambda grid") {
  Vector d(3);
  d << 5, 2, 0.3;
  const double a = 0.4;
  const double top = lambda_max_bound(d, 20, a, 1e-2);
  CHECK(lambda_grid(d, 20, a, 1e-2, 2) == std::vector<double>{0.0, top});
  const auto g4 = lambda_grid(d, 20, a, 1e-2, 4);
  REQUIRE(g4.size() == 4);
  CHECK(g4[0] == 0.0);
  CHECK(g4[1] == doctest::Approx(top * 1e-4));
  CHECK(g4[2] == doctest::Approx(top * 1e-2));
  CHECK(g4[3] == top);
  CHECK(lambda_grid(Vector::Constant(3, std::sqrt(0.6 / 0.4)), 20, a, 1e-2, 10) == std::vector<double>{0.0});
}

TEST_CASE("cv_select_lambda regularizes when p > n") {
  std::mt19937_64 rng(67);
  const Matrix x = oracle::gaussian_rows(10, 20, rng);
  const SymMatrix s = sample_covariance(x);
  const auto grid = lambda_grid(eig_sym(s).eigenvalues, 10, alpha_hat(s), 1e-2, 20);
  const auto cv = cv_select_lambda(x, 5, grid, 5);
  CHECK(cv.chosen > 0.0);
  CHECK(cv.chosen == cv.grid[cv.chosen_index]);
  for (const double score : cv.mean_scores) CHECK(cv.mean_scores[cv.chosen_index] <= score);

  const std::vector<double> zero{0.0};
  const Matrix tall = oracle::gaussian_rows(40, 3, rng);
  CHECK(cv_select_lambda(tall, 4, zero, 1).chosen == 0.0);
}

TEST_CASE("cv scores follow the held-out likelihood oracle") {
  std::mt19937_64 rng(71);
  const Matrix x = oracle::gaussian_rows(24, 4, rng);
  const auto plan = make_folds(24, 4, 12);
  const std::vector<double> grid{0.0, 0.5, 5.0};
  const auto cv = cv_select_lambda(x, plan, grid);

  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
      Matrix train(0, 4), held(0, 4);
      for (const auto i : plan.training_rows(k)) {
        train.conservativeResize(train.rows() + 1, Eigen::NoChange);
        train.row(train.rows() - 1) = x.row(i);
      }
      for (const auto i : plan.heldout_rows(k)) {
        held.conservativeResize(held.rows() + 1, Eigen::NoChange);
        held.row(held.rows() - 1) = x.row(i);
      }
      const SymMatrix s = sample_covariance(train);
      const auto est = cernn_estimate(s, CernnParams{static_cast<double>(train.rows()), grid[g], alpha_hat(s)});
      const double score = oracle::heldout_nll(est.matrix.matrix(), held, train.colwise().mean().transpose());
      CHECK(cv.fold_scores(k, static_cast<Eigen::Index>(g)) == doctest::Approx(score).epsilon(1e-9));
      total += score;
    }
    CHECK(cv.mean_scores[g] == doctest::Approx(total / 24.0).epsilon(1e-9));
  }
}

TEST_CASE("row order and thread count do not change fold scores") {
  std::mt19937_64 rng(73);
  const Matrix x = oracle::gaussian_rows(30, 6, rng);
  const auto plan = make_folds(30, 5, 4);
  const std::vector<double> grid{0.0, 0.1, 1.0, 10.0};
  const auto base = cv_select_lambda(x, plan, grid);

  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(30, 6);
  FoldPlan moved = plan;
  for (std::size_t i = 0; i < 30; ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
    moved.assignments[i] = plan.assignments[static_cast<std::size_t>(perm[i])];
  }
  const auto again = cv_select_lambda(shuffled, moved, grid);
  CHECK((again.fold_scores - base.fold_scores).cwiseAbs().maxCoeff() <= 1e-10 * (1 + base.fold_scores.cwiseAbs().maxCoeff()));

  CvOptions threaded;
  threaded.threads = 4;
  const auto parallel = cv_select_lambda(x, plan, grid, threaded);
  CHECK(parallel.fold_scores == base.fold_scores);
  CHECK(parallel.mean_scores == base.mean_scores);
}

TEST_CASE("plenty of data picks weak regularization") {
  std::mt19937_64 rng(79);
  Vector scales(5);
  scales << 2, 1.5, 1, 0.8, 0.6;
  int weak = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    const Matrix x = oracle::gaussian_rows(500, 5, rng) * scales.asDiagonal();
    const SymMatrix s = sample_covariance(x);
    const auto grid = lambda_grid(eig_sym(s).eigenvalues, 500, alpha_hat(s), 1e-2, 13);
    const auto cv = cv_select_lambda(x, 5, grid, static_cast<std::uint64_t>(t));
    if (cv.chosen <= 10.0 * grid[1]) ++weak;
  }
  CHECK(weak >= 8);
}

TEST_CASE("kappa cross-validation") {
  std::mt19937_64 rng(83);
  const Matrix x = oracle::gaussian_rows(12, 8, rng);
  const Vector d = eig_sym(sample_covariance(x)).eigenvalues;
  const auto grid = kappa_grid(d, 10);
  CHECK(grid.front() == 1.0);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
  const auto cv = cv_select_kappa(x, make_folds(12, 4, 2), grid);
  CHECK(std::find(grid.begin(), grid.end(), cv.chosen) != grid.end());
  for (const double score : cv.mean_scores) CHECK(cv.mean_scores[cv.chosen_index] <= score);
}

TEST_CASE("supervised cross-validation") {
  std::mt19937_64 rng(89);
  Matrix x = oracle::gaussian_rows(40, 3, rng);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 2;
    if (i % 2) x(i, 0) += 12.0;
  }
  const std::vector<std::vector<double>> grids{{0.0, 1.0, 10.0}, {0.0, 1.0, 10.0}};
  const auto separable = cv_select_supervised(x, labels, 5, grids, 1, cernn_qda_fitter());
  CHECK(separable.cv_error == 0.0);
  CHECK(separable.params.size() == 2);

  // Labels unrelated to the features: error near the majority-class rate.
  Matrix noise = oracle::gaussian_rows(120, 2, rng);
  std::vector<int> coin(120);
  std::bernoulli_distribution b(0.7);
  for (auto& c : coin) c = b(rng) ? 0 : 1;
  const double majority = static_cast<double>(std::count(coin.begin(), coin.end(), 0)) / 120.0;
  const auto chance = cv_select_supervised(noise, coin, 5, {{0.0}}, 2, rda_fitter());
  CHECK(std::abs(chance.cv_error - (1.0 - majority)) <= 0.1);

  const std::vector<int> one_class(40, 0);
  CHECK_THROWS_AS(cv_select_supervised(x, one_class, 5, {{0.0}}, 1, cernn_qda_fitter()), StratificationError);

  const auto threaded = cv_select_supervised(x, labels, 5, grids, 1, cernn_qda_fitter(), 4);
  CHECK(threaded.params == separable.params);
  CHECK(threaded.cv_error == separable.cv_error);
}
