#include "cernn/cli.hpp"

#include <charconv>
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "cernn/applications.hpp"
#include "cernn/errors.hpp"
#include "cernn/io.hpp"
#include "cernn/losses.hpp"
#include "cernn/selection.hpp"

namespace cernn::cli {

namespace {

using Json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string input, output, sidecar, train, test, model;
  std::string method, lambda, alpha, gamma, rho, kappa, center, grid, discriminant;
  int folds = 0, grid_size = 0, p = 0, trials = 0;
  int clusters = 0, restarts = 0, max_iter = 0, freeze_alpha_after = 0, label_column = 0;
  double epsilon = 0.0, upsilon = 0.0, tol = 0.0;
  std::string n_list, spectrum, kappas, scenarios, ratios, methods;
  bool full_scale = false;
  std::string seed;
  unsigned threads = 0;
};

std::string text(const std::string& v) { return v; }
std::string text(bool v) { return v ? "true" : "false"; }
std::string text(double v) { return format_real(v); }
std::string text(int v) { return std::to_string(v); }
std::string text(unsigned v) { return std::to_string(v); }

// Options of one subcommand in declaration order. Defaults are applied after
// parsing because several subcommands share a RunConfig field with different
// defaults.
struct Command {
  struct Entry {
    std::string name;
    CLI::Option* option;
    std::function<void()> reset;
    std::function<std::string()> value;
    bool replay;
  };
  CLI::App* app = nullptr;
  std::vector<Entry> entries;

  template <class T>
  CLI::Option* add(const std::string& name, T& field, T def, const std::string& help, bool replay = true) {
    CLI::Option* o = nullptr;
    if constexpr (std::is_same_v<T, bool>) {
      o = app->add_flag("--" + name, field, help);
    } else {
      o = app->add_option("--" + name, field, help);
      o->default_str(text(def));
    }
    entries.push_back({name, o, [&field, def] { field = def; }, [&field] { return text(field); }, replay});
    return o;
  }

  void apply_defaults() {
    for (auto& e : entries) {
      if (e.option->count() == 0) e.reset();
    }
  }

  Json resolved() const {
    Json j = Json::object();
    for (const auto& e : entries) {
      if (e.replay) j[e.name] = e.value();
    }
    return j;
  }
};

std::unique_ptr<std::ostream> open_output(const std::string& path) {
  auto f = std::make_unique<std::ofstream>(path, std::ios::binary);
  if (!*f) throw InvalidInput("cannot write " + path);
  return f;
}

void emit(const RunConfig& cfg, std::ostream& out, const std::string& body) {
  if (cfg.output == "-") {
    out << body;
    return;
  }
  *open_output(cfg.output) << body;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": expected a number, got '" + s + "'");
  }
}

std::vector<double> real_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_real(item, what));
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

std::optional<double> real_or_auto(const std::string& s, const std::string& what) {
  if (s == "auto") return std::nullopt;
  return to_real(s, what);
}

CenterMode center_mode(const std::string& s) { return s == "zero" ? CenterMode::Zero : CenterMode::TrainingMean; }

Json cv_json(const CvResult& cv) {
  return Json{{"grid", cv.grid}, {"mean_scores", cv.mean_scores}, {"chosen", cv.chosen},
              {"chosen_index", cv.chosen_index}};
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header = {}) {
  std::ostringstream ss;
  write_csv(ss, m, header);
  return ss.str();
}

struct LongCsv {
  std::ostringstream body;
  LongCsv() { body << "scenario,trial,method,metric,value\n"; }
  void row(const std::string& scenario, int trial, std::string_view method, const std::string& metric, double v) {
    body << scenario << ',' << trial << ',' << method << ',' << metric << ',' << format_real(v) << '\n';
  }
};

std::string compact(double x) {
  std::ostringstream ss;
  ss << x;
  return ss.str();
}

// --- commands ----------------------------------------------------------------

Json cmd_estimate(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const Matrix x = read_csv_file(cfg.input).values;
  const SymMatrix s = sample_covariance(x);
  const double n = static_cast<double>(x.rows());
  const Method method = parse_method(cfg.method);
  Json res;
  std::optional<CovarianceEstimate> est;

  switch (method) {
    case Method::Sample:
      est = sample_estimate(s);
      break;
    case Method::Cernn: {
      const auto fixed_alpha = real_or_auto(cfg.alpha, "--alpha");
      const double alpha = fixed_alpha ? *fixed_alpha : alpha_hat(s);
      auto lambda = real_or_auto(cfg.lambda, "--lambda");
      if (!lambda) {
        const auto grid = cfg.grid.empty()
                              ? lambda_grid(eig_sym(s).eigenvalues, n, alpha, cfg.epsilon, cfg.grid_size)
                              : real_list(cfg.grid, "--grid");
        const CvResult cv =
            cv_select_lambda(x, cfg.folds, grid, seed, CvOptions{center_mode(cfg.center), fixed_alpha, cfg.threads});
        lambda = cv.chosen;
        res["cv"] = cv_json(cv);
      }
      est = cernn_estimate(s, CernnParams{n, *lambda, alpha});
      res["lambda"] = *lambda;
      res["alpha"] = alpha;
      break;
    }
    case Method::Linear: {
      const auto gamma = real_or_auto(cfg.gamma, "--gamma");
      if (!gamma) throw UsageError("--method linear needs a numeric --gamma (use --method lw for a data-driven weight)");
      const auto rho = real_or_auto(cfg.rho, "--rho");
      est = linear_shrinkage(s, *gamma, rho ? *rho : trace(s) / static_cast<double>(s.dim()));
      res["gamma"] = *gamma;
      res["rho"] = std::get<LinearParams>(est->params).rho;
      break;
    }
    case Method::LedoitWolf:
      est = lw_estimate(x);
      res["weight"] = std::get<LinearParams>(est->params).gamma;
      break;
    case Method::Cnr: {
      auto kappa = real_or_auto(cfg.kappa, "--kappa");
      if (!kappa) {
        const auto grid = cfg.grid.empty() ? kappa_grid(eig_sym(s).eigenvalues, cfg.grid_size)
                                           : real_list(cfg.grid, "--grid");
        const CvResult cv = cv_select_kappa(x, make_folds(x.rows(), cfg.folds, seed), grid,
                                            CvOptions{center_mode(cfg.center), std::nullopt, cfg.threads});
        kappa = cv.chosen;
        res["cv"] = cv_json(cv);
      }
      est = cnr_estimate(s, *kappa);
      res["kappa_max"] = *kappa;
      res["tau_star"] = std::get<CnrParams>(est->params).tau_star;
      break;
    }
    case Method::Rda:
      throw UsageError("estimate does not support --method rda (see classify)");
  }
  emit(cfg, out, matrix_csv(est->matrix.matrix()));
  const Vector& e = est->spectrum.eigenvalues;
  res["condition_number"] = e.minCoeff() > 0.0 ? e.maxCoeff() / e.minCoeff() : std::numeric_limits<double>::infinity();
  return res;
}

Json cmd_cv(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const Matrix x = read_csv_file(cfg.input).values;
  const SymMatrix s = sample_covariance(x);
  const Vector d = eig_sym(s).eigenvalues;
  const FoldPlan plan = make_folds(x.rows(), cfg.folds, seed);
  const auto fixed_alpha = real_or_auto(cfg.alpha, "--alpha");
  const CvOptions opts{center_mode(cfg.center), fixed_alpha, cfg.threads};
  CvResult cv;
  if (cfg.method == "cnr") {
    const auto grid = cfg.grid.empty() ? kappa_grid(d, cfg.grid_size) : real_list(cfg.grid, "--grid");
    cv = cv_select_kappa(x, plan, grid, opts);
  } else {
    const double alpha = fixed_alpha ? *fixed_alpha : alpha_hat(s);
    const auto grid = cfg.grid.empty()
                          ? lambda_grid(d, static_cast<double>(x.rows()), alpha, cfg.epsilon, cfg.grid_size)
                          : real_list(cfg.grid, "--grid");
    cv = cv_select_lambda(x, plan, grid, opts);
  }
  const auto G = static_cast<Eigen::Index>(cv.grid.size());
  Matrix table(G, 2 + cv.fold_scores.rows());
  std::vector<std::string> header{"parameter", "mean_score"};
  for (Eigen::Index k = 0; k < cv.fold_scores.rows(); ++k) header.push_back("fold_" + std::to_string(k + 1));
  for (Eigen::Index g = 0; g < G; ++g) {
    table(g, 0) = cv.grid[static_cast<std::size_t>(g)];
    table(g, 1) = cv.mean_scores[static_cast<std::size_t>(g)];
    table.row(g).tail(cv.fold_scores.rows()) = cv.fold_scores.col(g).transpose();
  }
  emit(cfg, out, matrix_csv(table, header));
  return Json{{"chosen", cv.chosen}, {"chosen_index", cv.chosen_index}};
}

Json cmd_dispersion(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  DispersionSpec spec;
  spec.p = cfg.p;
  spec.trials = cfg.trials;
  spec.seed = seed;
  spec.n_list.clear();
  for (const double v : real_list(cfg.n_list, "--n-list")) {
    if (v < 1 || v != std::floor(v)) throw UsageError("--n-list: sample sizes must be positive integers");
    spec.n_list.push_back(static_cast<int>(v));
  }
  const DispersionTable table = dispersion_experiment(spec, cfg.threads);
  LongCsv csv;
  Json medians = Json::object();
  for (std::size_t j = 0; j < spec.n_list.size(); ++j) {
    const std::string scenario = "n" + std::to_string(spec.n_list[j]);
    std::vector<double> top, bottom;
    for (int t = 0; t < spec.trials; ++t) {
      const Vector& e = table.eigenvalues[j][static_cast<std::size_t>(t)];
      for (Eigen::Index i = 0; i < e.size(); ++i) csv.row(scenario, t, "sample", "eigenvalue_" + std::to_string(i + 1), e(i));
      top.push_back(e(0));
      bottom.push_back(e(e.size() - 1));
    }
    const auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size() / 2;
      return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    medians[scenario] = Json{{"largest", median(top)}, {"smallest", median(bottom)}};
  }
  emit(cfg, out, csv.body.str());
  return Json{{"median_eigenvalues", medians}};
}

Json cmd_paths(const RunConfig& cfg, std::ostream& out) {
  const auto d_list = real_list(cfg.spectrum, "--spectrum");
  const Vector d = Eigen::Map<const Vector>(d_list.data(), static_cast<Eigen::Index>(d_list.size()));
  const auto kappas = real_list(cfg.kappas, "--kappas");
  const auto path = path_at_condition_number(d, kappas);
  LongCsv csv;
  for (const auto& pt : path) {
    const std::string scenario = "kappa" + compact(pt.kappa);
    const auto spectrum = [&](std::string_view method, const Vector& e, double tuning) {
      for (Eigen::Index i = 0; i < e.size(); ++i) csv.row(scenario, 0, method, "eigenvalue_" + std::to_string(i + 1), e(i));
      csv.row(scenario, 0, method, "tuning", tuning);
    };
    spectrum("cernn", pt.cernn, pt.lambda);
    spectrum("cnr", pt.cnr, pt.kappa_max);
    spectrum("linear", pt.linear, pt.gamma);
  }
  emit(cfg, out, csv.body.str());
  return Json::object();
}

Json cmd_loss(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  BimodalOptions opts;
  opts.methods.clear();
  for (const auto& m : split_list(cfg.methods)) {
    const Method method = parse_method(m);
    if (method != Method::Cernn && method != Method::Cnr && method != Method::LedoitWolf) {
      throw UsageError("--methods: simulate-loss supports cernn, cnr and lw");
    }
    opts.methods.push_back(method);
  }
  opts.cv_folds = cfg.folds;
  opts.grid_size = cfg.grid_size;
  opts.alpha = real_or_auto(cfg.alpha, "--alpha");
  opts.threads = cfg.threads;

  std::vector<std::optional<double>> fractions;
  for (const auto& s : split_list(cfg.scenarios)) {
    if (s == "singleton") {
      fractions.emplace_back(std::nullopt);
    } else {
      fractions.emplace_back(to_real(s, "--scenarios"));
    }
  }
  const auto ratios = real_list(cfg.ratios, "--ratios");
  const int trials = cfg.full_scale ? 100 : cfg.trials;

  LongCsv csv;
  Json summary = Json::object();
  std::uint64_t index = 0;
  for (const double ratio : ratios) {
    for (const auto& fraction : fractions) {
      BimodalSpec spec;
      spec.p = cfg.p;
      spec.fraction_high = fraction;
      spec.upsilon = cfg.upsilon;
      spec.ratio = ratio;
      spec.trials = trials;
      spec.seed = substream_seed(seed, index++);
      try {
        spec.validate();
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      }
      if (opts.cv_folds > spec.n()) {
        throw UsageError("--folds exceeds the sample size of scenario " + spec.scenario_name());
      }
      const BimodalResult r = bimodal_experiment(spec, opts);
      const std::string scenario = spec.scenario_name();
      for (int t = 0; t < trials; ++t) {
        for (std::size_t m = 0; m < r.methods.size(); ++m) {
          const auto name = method_name(r.methods[m]);
          const auto tt = static_cast<std::size_t>(t);
          csv.row(scenario, t, name, "entropy", r.losses[tt][m].entropy);
          csv.row(scenario, t, name, "quadratic", r.losses[tt][m].quadratic);
          csv.row(scenario, t, name, "entropy_ratio", r.ratios[tt][m].entropy);
          csv.row(scenario, t, name, "quadratic_ratio", r.ratios[tt][m].quadratic);
          csv.row(scenario, t, name, "tuning", r.tuning[tt][m]);
        }
      }
      Json s = Json::object();
      for (const auto& rs : r.summary) {
        s[std::string(method_name(rs.method))] =
            Json{{"quadratic_ratio_mean", rs.quadratic_mean}, {"quadratic_ratio_sd", rs.quadratic_sd},
                 {"entropy_ratio_mean", rs.entropy_mean}, {"entropy_ratio_sd", rs.entropy_sd}};
      }
      summary[scenario] = s;
    }
  }
  emit(cfg, out, csv.body.str());
  return Json{{"trials", trials}, {"summary", summary}};
}

Json cmd_cluster(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const Matrix x = read_csv_file(cfg.input).values;
  EmOptions opts;
  opts.clusters = cfg.clusters;
  opts.lambda = to_real(cfg.lambda, "--lambda");
  if (opts.lambda < 0.0) throw UsageError("--lambda must be >= 0");
  opts.restarts = cfg.restarts;
  opts.max_iter = cfg.max_iter;
  opts.tol = cfg.tol;
  opts.seed = seed;
  opts.threads = cfg.threads;
  opts.freeze_alpha_after = cfg.freeze_alpha_after;
  const EmResult r = em_cluster(x, opts);
  const auto labels = hard_assignments(r.best.responsibilities);
  Matrix col(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) col(static_cast<Eigen::Index>(i), 0) = labels[i];
  emit(cfg, out, matrix_csv(col, {"cluster"}));
  if (!cfg.model.empty()) {
    *open_output(cfg.model) << model_to_json(r.best.state.classes, ModelMeta{x.cols(), opts.clusters, seed});
  }
  return Json{{"objective", r.best.state.objective},
              {"expected_loglik", r.best.expected_loglik},
              {"iterations", r.best.state.iteration},
              {"converged", r.best.converged},
              {"best_restart", r.best_restart},
              {"failed_restarts", r.failed_restarts}};
}

struct Labelled {
  Matrix features;
  std::vector<int> labels;
};

Labelled split_labels(const Matrix& m, int column, const std::map<double, int>& ids) {
  Labelled out;
  out.features.resize(m.rows(), m.cols() - 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j != column) out.features(i, k++) = m(i, j);
    }
    const auto it = ids.find(m(i, column));
    out.labels.push_back(it == ids.end() ? -1 : it->second);
  }
  return out;
}

Json cmd_classify(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const Matrix train_raw = read_csv_file(cfg.train).values;
  if (train_raw.cols() < 2) throw InvalidInput(cfg.train + ": need at least one feature and a label column");
  const int column = cfg.label_column < 0 ? static_cast<int>(train_raw.cols()) - 1 : cfg.label_column;
  if (column >= train_raw.cols()) throw UsageError("--label-column is out of range");

  std::map<double, int> ids;
  for (Eigen::Index i = 0; i < train_raw.rows(); ++i) ids.emplace(train_raw(i, column), 0);
  std::vector<double> values;
  for (auto& [v, id] : ids) {
    id = static_cast<int>(values.size());
    values.push_back(v);
  }
  const Labelled train = split_labels(train_raw, column, ids);
  const int c = static_cast<int>(values.size());

  const Matrix test_raw = read_csv_file(cfg.test).values;
  std::optional<Labelled> test_labelled;
  Matrix test_x;
  if (test_raw.cols() == train_raw.cols()) {
    test_labelled = split_labels(test_raw, column, ids);
    test_x = test_labelled->features;
  } else if (test_raw.cols() == train_raw.cols() - 1) {
    test_x = test_raw;
  } else {
    throw InvalidInput(cfg.test + ": column count matches neither the training features nor features plus label");
  }

  Json res;
  QdaModel model;
  const bool rda = cfg.method == "rda";
  if (rda) {
    auto gamma = real_or_auto(cfg.gamma, "--gamma");
    if (!gamma) {
      std::vector<double> grid;
      const int g = std::max(cfg.grid_size, 2);
      for (int i = 0; i < g; ++i) grid.push_back(static_cast<double>(i) / (g - 1));
      const auto cv = cv_select_supervised(train.features, train.labels, cfg.folds, {grid}, seed, rda_fitter(),
                                           cfg.threads);
      gamma = cv.params[0];
      res["cv_error"] = cv.cv_error;
    }
    model = fit_rda(train.features, train.labels, *gamma);
    res["gamma"] = *gamma;
  } else {
    std::vector<double> lambdas;
    if (cfg.lambda == "auto") {
      std::vector<std::vector<double>> grids;
      for (int k = 0; k < c; ++k) {
        Matrix rows(0, train.features.cols());
        for (std::size_t i = 0; i < train.labels.size(); ++i) {
          if (train.labels[i] != k) continue;
          rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
          rows.row(rows.rows() - 1) = train.features.row(static_cast<Eigen::Index>(i));
        }
        const SymMatrix s = sample_covariance(rows);
        grids.push_back(lambda_grid(eig_sym(s).eigenvalues, static_cast<double>(rows.rows()), alpha_hat(s),
                                    cfg.epsilon, cfg.grid_size));
      }
      const Discriminant disc = cfg.discriminant == "linear" ? Discriminant::Linear : Discriminant::Gaussian;
      const auto cv = cv_select_supervised(train.features, train.labels, cfg.folds, grids, seed,
                                           cernn_qda_fitter(disc), cfg.threads);
      lambdas = cv.params;
      res["cv_error"] = cv.cv_error;
    } else {
      lambdas = real_list(cfg.lambda, "--lambda");
      if (lambdas.size() == 1) lambdas.assign(static_cast<std::size_t>(c), lambdas[0]);
      if (static_cast<int>(lambdas.size()) != c) {
        throw UsageError("--lambda: give one value or one per class (" + std::to_string(c) + " classes)");
      }
    }
    model = fit_qda(train.features, train.labels, lambdas);
    res["lambdas"] = lambdas;
  }
  model.discriminant = cfg.discriminant == "linear" ? Discriminant::Linear : Discriminant::Gaussian;

  const auto predicted = model.predict(test_x);
  Matrix col(static_cast<Eigen::Index>(predicted.size()), 1);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    col(static_cast<Eigen::Index>(i), 0) = values[static_cast<std::size_t>(predicted[i])];
  }
  emit(cfg, out, matrix_csv(col, {"prediction"}));
  if (!cfg.model.empty()) {
    *open_output(cfg.model) << model_to_json(model.classes, ModelMeta{train.features.cols(), c, seed});
  }
  res["classes"] = values;
  if (test_labelled) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == test_labelled->labels[i];
    res["accuracy"] = static_cast<double>(hits) / static_cast<double>(predicted.size());
  }
  return res;
}

// --- driver ------------------------------------------------------------------

unsigned default_threads() {
  if (const char* env = std::getenv("CERNN_THREADS")) {
    try {
      return static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
    }
  }
  return 0;
}

// Replaces `--config FILE` with the options recorded in that sidecar; flags
// given on the command line after it still win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
  if (!cfg.contains("command") || !cfg.contains("options")) throw InvalidInput(path + ": not a run sidecar");
  const auto command = cfg["command"].get<std::string>();
  if (!rest.empty() && rest.front().rfind("--", 0) != 0) {
    if (rest.front() != command) throw UsageError("--config replays '" + command + "', not '" + rest.front() + "'");
    rest.erase(rest.begin());
  }
  std::vector<std::string> out{command};
  for (const auto& [name, value] : cfg["options"].items()) {
    const auto v = value.get<std::string>();
    if (!v.empty()) out.push_back("--" + name + "=" + v);
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

int execute(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const auto args = expand_config(raw_args);

  CLI::App app{"Covariance estimation with nuclear-norm regularization", "cernn"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  RunConfig cfg;
  std::map<std::string, Command> commands;
  const auto make = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", "Replay the options recorded in a sidecar JSON");
    return c;
  };
  const auto common = [&](Command& c, bool seeded = true) {
    c.add("output", cfg.output, std::string("-"), "Result file ('-' for standard output)");
    c.add("sidecar", cfg.sidecar, std::string(), "Config sidecar path (default <output>.config.json)", false);
    if (seeded) c.add("seed", cfg.seed, std::string(), "RNG seed (default: drawn from OS entropy)");
    c.add("threads", cfg.threads, default_threads(), "Worker threads, 0 = all cores (env CERNN_THREADS)")
        ->check(CLI::NonNegativeNumber);
  };
  const auto positive_int = CLI::Range(1, std::numeric_limits<int>::max());
  const auto fold_count = CLI::Range(2, std::numeric_limits<int>::max());

  {
    Command& c = make("estimate", "Estimate a covariance matrix from observations");
    c.add("input", cfg.input, std::string(), "Observations CSV (rows = samples)")->required();
    c.add("method", cfg.method, std::string("cernn"), "sample | cernn | linear | lw | cnr")
        ->check(CLI::IsMember({"sample", "cernn", "linear", "lw", "cnr"}));
    c.add("lambda", cfg.lambda, std::string("auto"), "CERNN strength or 'auto' (cross-validated)");
    c.add("alpha", cfg.alpha, std::string("auto"), "CERNN mixture constant or 'auto'");
    c.add("gamma", cfg.gamma, std::string("auto"), "Linear shrinkage weight");
    c.add("rho", cfg.rho, std::string("auto"), "Linear shrinkage target scale ('auto' = tr(S)/p)");
    c.add("kappa", cfg.kappa, std::string("auto"), "CNR condition-number bound or 'auto'");
    c.add("folds", cfg.folds, 5, "Cross-validation folds")->check(fold_count);
    c.add("grid-size", cfg.grid_size, 30, "Points in the tuning grid")->check(positive_int);
    c.add("grid", cfg.grid, std::string(), "Explicit comma-separated tuning grid");
    c.add("epsilon", cfg.epsilon, 1e-2, "Relative tolerance of the lambda grid bound")
        ->check(CLI::PositiveNumber);
    c.add("center", cfg.center, std::string("mean"), "Held-out centring: mean | zero")
        ->check(CLI::IsMember({"mean", "zero"}));
    common(c);
  }
  {
    Command& c = make("cv", "Cross-validation scores over a tuning grid");
    c.add("input", cfg.input, std::string(), "Observations CSV")->required();
    c.add("method", cfg.method, std::string("cernn"), "cernn | cnr")->check(CLI::IsMember({"cernn", "cnr"}));
    c.add("alpha", cfg.alpha, std::string("auto"), "CERNN mixture constant or 'auto'");
    c.add("folds", cfg.folds, 5, "Cross-validation folds")->check(fold_count);
    c.add("grid-size", cfg.grid_size, 30, "Points in the tuning grid")->check(positive_int);
    c.add("grid", cfg.grid, std::string(), "Explicit comma-separated tuning grid");
    c.add("epsilon", cfg.epsilon, 1e-2, "Relative tolerance of the lambda grid bound")
        ->check(CLI::PositiveNumber);
    c.add("center", cfg.center, std::string("mean"), "Held-out centring: mean | zero")
        ->check(CLI::IsMember({"mean", "zero"}));
    common(c);
  }
  {
    Command& c = make("simulate-dispersion", "Sample eigenvalue dispersion under an identity covariance");
    c.add("p", cfg.p, 10, "Dimension")->check(positive_int);
    c.add("n-list", cfg.n_list, std::string("5,10,20,50,100,500"), "Comma-separated sample sizes");
    c.add("trials", cfg.trials, 100, "Trials per sample size")->check(positive_int);
    common(c);
  }
  {
    Command& c = make("simulate-paths", "Shrunken spectra matched on condition number");
    c.add("spectrum", cfg.spectrum, std::string("13.29,5.73,1.51,0.55,0.44"), "Sample eigenvalues");
    c.add("kappas", cfg.kappas, std::string("25,10,5,2"), "Target condition numbers");
    common(c, false);
  }
  {
    Command& c = make("simulate-loss", "Loss ratios against CERNN on bimodal populations");
    c.add("p", cfg.p, 125, "Dimension")->check(positive_int);
    c.add("scenarios", cfg.scenarios, std::string("singleton,0.1,0.2,0.3,0.4"),
          "'singleton' and/or fractions of high eigenvalues");
    c.add("ratios", cfg.ratios, std::string("4"), "Comma-separated p/n ratios");
    c.add("upsilon", cfg.upsilon, 0.1, "Spike strength");
    c.add("trials", cfg.trials, 20, "Trials per scenario")->check(positive_int);
    c.add("full-scale", cfg.full_scale, false, "Run 100 trials per scenario");
    c.add("methods", cfg.methods, std::string("cernn,cnr,lw"), "Estimators to compare");
    c.add("folds", cfg.folds, 10, "Cross-validation folds")->check(fold_count);
    c.add("grid-size", cfg.grid_size, 30, "Points in each tuning grid")->check(positive_int);
    c.add("alpha", cfg.alpha, std::string("0.5"), "CERNN mixture constant or 'auto'");
    common(c);
  }
  {
    Command& c = make("cluster", "Gaussian mixture clustering with CERNN-regularized covariances");
    c.add("input", cfg.input, std::string(), "Observations CSV")->required();
    c.add("clusters", cfg.clusters, 0, "Number of clusters")->required()->check(positive_int);
    c.add("lambda", cfg.lambda, std::string("0"), "Regularization strength");
    c.add("restarts", cfg.restarts, 10, "k-means++ restarts")->check(positive_int);
    c.add("max-iter", cfg.max_iter, 500, "EM iteration cap")->check(positive_int);
    c.add("tol", cfg.tol, 1e-7, "Relative objective change for convergence")->check(CLI::PositiveNumber);
    c.add("freeze-alpha-after", cfg.freeze_alpha_after, -1, "Stop updating alpha after this iteration");
    c.add("model", cfg.model, std::string(), "Write the fitted mixture as JSON");
    common(c);
  }
  {
    Command& c = make("classify", "Regularized quadratic discriminant analysis");
    c.add("train", cfg.train, std::string(), "Training CSV with a label column")->required();
    c.add("test", cfg.test, std::string(), "Test CSV, with or without the label column")->required();
    c.add("label-column", cfg.label_column, -1, "Zero-based label column (default: last)");
    c.add("method", cfg.method, std::string("cernn"), "cernn | rda")->check(CLI::IsMember({"cernn", "rda"}));
    c.add("lambda", cfg.lambda, std::string("auto"), "'auto', one value, or one value per class");
    c.add("gamma", cfg.gamma, std::string("auto"), "RDA blend or 'auto'");
    c.add("discriminant", cfg.discriminant, std::string("gaussian"), "gaussian | linear")
        ->check(CLI::IsMember({"gaussian", "linear"}));
    c.add("folds", cfg.folds, 5, "Cross-validation folds")->check(fold_count);
    c.add("grid-size", cfg.grid_size, 10, "Points per tuning grid")->check(positive_int);
    c.add("epsilon", cfg.epsilon, 1e-2, "Relative tolerance of the lambda grid bound")
        ->check(CLI::PositiveNumber);
    c.add("model", cfg.model, std::string(), "Write the fitted classifier as JSON");
    common(c);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const auto selected = app.get_subcommands().front();
  Command& command = commands.at(selected->get_name());
  command.apply_defaults();

  std::uint64_t seed = 0;
  if (cfg.seed.empty()) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    cfg.seed = std::to_string(seed);
  } else {
    const char* end = cfg.seed.data() + cfg.seed.size();
    const auto [ptr, ec] = std::from_chars(cfg.seed.data(), end, seed);
    if (ec != std::errc() || ptr != end) throw UsageError("--seed must be a non-negative integer");
  }

  const std::string& name = selected->get_name();
  Json results;
  if (name == "estimate") results = cmd_estimate(cfg, seed, out);
  else if (name == "cv") results = cmd_cv(cfg, seed, out);
  else if (name == "simulate-dispersion") results = cmd_dispersion(cfg, seed, out);
  else if (name == "simulate-paths") results = cmd_paths(cfg, out);
  else if (name == "simulate-loss") results = cmd_loss(cfg, seed, out);
  else if (name == "cluster") results = cmd_cluster(cfg, seed, out);
  else results = cmd_classify(cfg, seed, out);

  const Json sidecar{{"command", name}, {"options", command.resolved()}, {"results", results}};
  const std::string path = !cfg.sidecar.empty()     ? cfg.sidecar
                           : cfg.output != "-"      ? cfg.output + ".config.json"
                                                    : "cernn-" + name + ".config.json";
  *open_output(path) << sidecar.dump(2) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return execute(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidInput& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const SingularMatrix& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const Underdetermined& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cernn::cli
