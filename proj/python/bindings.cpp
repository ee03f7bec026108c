#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cernn/applications.hpp"
#include "cernn/cli.hpp"
#include "cernn/errors.hpp"
#include "cernn/losses.hpp"
#include "cernn/selection.hpp"

namespace py = pybind11;
using namespace cernn;

namespace {

std::optional<double> tuning_of(const CovarianceEstimate& e) {
  if (const auto* c = std::get_if<CernnParams>(&e.params)) return c->lambda;
  if (const auto* l = std::get_if<LinearParams>(&e.params)) return l->gamma;
  if (const auto* k = std::get_if<CnrParams>(&e.params)) return k->kappa_max;
  return std::nullopt;
}

py::dict cv_to_dict(const CvResult& cv) {
  py::dict d;
  d["chosen"] = cv.chosen;
  d["chosen_index"] = cv.chosen_index;
  d["grid"] = cv.grid;
  d["mean_scores"] = cv.mean_scores;
  d["fold_scores"] = cv.fold_scores;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Covariance estimation by eigenvalue regularization with a nuclear-norm prior";

  PyObject* base = PyErr_NewException("cernn._core.CernnError", PyExc_ValueError, nullptr);
  m.add_object("CernnError", py::handle(base));
  py::register_exception<InvalidInput>(m, "InvalidInput", base);
  py::register_exception<SingularMatrix>(m, "SingularMatrix", base);
  py::register_exception<Underdetermined>(m, "Underdetermined", base);

  m.def("sample_covariance", [](const Matrix& x) { return sample_covariance(x).matrix(); }, py::arg("data"));

  m.def("cernn_eigenvalue", [](double d, double n, double lam, double alpha) {
    return cernn_eigenvalue(d, CernnParams{n, lam, alpha});
  }, py::arg("d"), py::arg("n"), py::arg("lam"), py::arg("alpha"));

  m.def("cernn_eigenvalues", [](const Vector& d, double n, double lam, double alpha) {
    return cernn_eigenvalues(d, CernnParams{n, lam, alpha});
  }, py::arg("d"), py::arg("n"), py::arg("lam"), py::arg("alpha"));

  m.def("cernn_estimate", [](const Matrix& s, double n, double lam, std::optional<double> alpha) {
    const SymMatrix sym(s);
    return cernn_estimate(sym, CernnParams{n, lam, alpha ? *alpha : alpha_hat(sym)}).matrix.matrix();
  }, py::arg("s"), py::arg("n"), py::arg("lam"), py::arg("alpha") = py::none(),
        "CERNN estimate of a covariance S; alpha defaults to alpha_hat(S).");

  m.def("alpha_hat", [](const Matrix& s) { return alpha_hat(SymMatrix(s)); }, py::arg("s"));

  m.def("lambda_max_bound", &lambda_max_bound, py::arg("d"), py::arg("n"), py::arg("alpha"),
        py::arg("epsilon") = 1e-2);
  m.def("lambda_grid", &lambda_grid, py::arg("d"), py::arg("n"), py::arg("alpha"), py::arg("epsilon") = 1e-2,
        py::arg("size") = 30);

  m.def("linear_shrinkage", [](const Matrix& s, double gamma, double rho) {
    return linear_shrinkage(SymMatrix(s), gamma, rho).matrix.matrix();
  }, py::arg("s"), py::arg("gamma"), py::arg("rho"));

  m.def("ledoit_wolf", [](const Matrix& x) {
    const auto e = lw_estimate(x);
    return py::make_tuple(e.matrix.matrix(), *tuning_of(e));
  }, py::arg("data"), "Returns (estimate, shrinkage weight).");

  m.def("cnr_eigenvalues", [](const Vector& d, double kappa_max) {
    const auto r = cnr_eigenvalues(d, kappa_max);
    return py::make_tuple(r.eigenvalues, r.tau_star);
  }, py::arg("d"), py::arg("kappa_max"));

  m.def("cnr_estimate", [](const Matrix& s, double kappa_max) {
    return cnr_estimate(SymMatrix(s), kappa_max).matrix.matrix();
  }, py::arg("s"), py::arg("kappa_max"));

  m.def("cv_select_lambda", [](const Matrix& x, int folds, std::vector<double> grid, std::uint64_t seed,
                               std::optional<double> alpha, unsigned threads) {
    CvOptions opts;
    opts.alpha = alpha;
    opts.threads = threads;
    const CvResult cv = [&] {
      py::gil_scoped_release release;
      return cv_select_lambda(x, make_folds(x.rows(), folds, seed), grid, opts);
    }();
    return cv_to_dict(cv);
  }, py::arg("data"), py::arg("folds"), py::arg("grid"), py::arg("seed") = 0, py::arg("alpha") = py::none(),
        py::arg("threads") = 1);

  m.def("entropy_loss", [](const Matrix& e, const Matrix& t) { return entropy_loss(SymMatrix(e), SymMatrix(t)); },
        py::arg("estimate"), py::arg("truth"));
  m.def("quadratic_loss", [](const Matrix& e, const Matrix& t) { return quadratic_loss(SymMatrix(e), SymMatrix(t)); },
        py::arg("estimate"), py::arg("truth"));

  m.def("fit_predict_qda", [](const Matrix& train, std::vector<int> labels, std::vector<double> lambdas,
                              const Matrix& test) {
    return fit_qda(train, labels, lambdas).predict(test);
  }, py::arg("train"), py::arg("labels"), py::arg("lambdas"), py::arg("test"),
        "Fits one CERNN covariance per class (labels in [0, len(lambdas))) and predicts test rows.");

  m.def("em_cluster", [](const Matrix& x, int clusters, double lam, int restarts, int max_iter, double tol,
                         std::uint64_t seed, unsigned threads) {
    EmOptions o;
    o.clusters = clusters;
    o.lambda = lam;
    o.restarts = restarts;
    o.max_iter = max_iter;
    o.tol = tol;
    o.seed = seed;
    o.threads = threads;
    EmResult r = [&] {
      py::gil_scoped_release release;
      return em_cluster(x, o);
    }();
    py::dict d;
    d["labels"] = hard_assignments(r.best.responsibilities);
    d["responsibilities"] = r.best.responsibilities.w;
    d["objective_trace"] = r.best.objective_trace;
    d["expected_loglik"] = r.best.expected_loglik;
    d["failed_restarts"] = r.failed_restarts;
    return d;
  }, py::arg("data"), py::arg("clusters"), py::arg("lam"), py::arg("restarts") = 10, py::arg("max_iter") = 500,
        py::arg("tol") = 1e-7, py::arg("seed") = 0, py::arg("threads") = 1);

  m.def("adjusted_rand_index", [](std::vector<int> a, std::vector<int> b) { return adjusted_rand_index(a, b); },
        py::arg("a"), py::arg("b"));

  m.def("run_cli", [](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
