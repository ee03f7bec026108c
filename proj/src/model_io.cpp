#include <cstdio>
#include <string>

#include <json.hpp>

#include "cernn/applications.hpp"
#include "cernn/errors.hpp"

namespace cernn {

namespace {

std::string real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void append_vector(std::string& out, const Vector& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += real(v(i));
  }
  out += ']';
}

}  // namespace

std::string model_to_json(const std::vector<GaussianClass>& classes, const ModelMeta& meta) {
  std::string out = "{\n  \"classes\": [";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& g = classes[k];
    out += k ? ",\n    {" : "\n    {";
    out += "\"method\": \"" + std::string(method_name(g.covariance.method)) + "\", ";
    out += "\"prior\": " + real(g.prior) + ", \"mean\": ";
    append_vector(out, g.mean);
    out += ", \"covariance\": [";
    const Matrix& m = g.covariance.matrix.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (i) out += ',';
      append_vector(out, m.row(i).transpose());
    }
    out += "], ";
    if (const auto* p = std::get_if<CernnParams>(&g.covariance.params)) {
      out += "\"n\": " + real(p->n) + ", \"lambda\": " + real(p->lambda) + ", \"alpha\": " + real(p->alpha);
    } else if (const auto* r = std::get_if<RdaParams>(&g.covariance.params)) {
      out += "\"gamma\": " + real(r->gamma) + ", \"lambda\": null, \"alpha\": null";
    } else {
      out += "\"lambda\": null, \"alpha\": null";
    }
    out += '}';
  }
  out += "\n  ],\n  \"meta\": {\"p\": " + std::to_string(meta.p) + ", \"c\": " + std::to_string(meta.c) +
         ", \"seed\": " + std::to_string(meta.seed) + "}\n}\n";
  return out;
}

std::vector<GaussianClass> model_from_json(const std::string& text, ModelMeta* meta) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    std::vector<GaussianClass> classes;
    for (const auto& c : doc.at("classes")) {
      const auto mean = c.at("mean").get<std::vector<double>>();
      const auto p = static_cast<Eigen::Index>(mean.size());
      const auto& rows = c.at("covariance");
      if (static_cast<Eigen::Index>(rows.size()) != p) throw InvalidInput("model covariance has the wrong shape");
      Matrix cov(p, p);
      for (Eigen::Index i = 0; i < p; ++i) {
        const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != p) throw InvalidInput("model covariance has the wrong shape");
        for (Eigen::Index j = 0; j < p; ++j) cov(i, j) = row[static_cast<std::size_t>(j)];
      }
      const SymMatrix sym(cov);
      const Method method = parse_method(c.value("method", std::string("cernn")));
      EstimateParams params;
      if (!c.at("lambda").is_null()) {
        params = CernnParams{c.value("n", 0.0), c.at("lambda").get<double>(), c.at("alpha").get<double>()};
      } else if (c.contains("gamma")) {
        params = RdaParams{c.at("gamma").get<double>()};
      }
      GaussianClass g{c.at("prior").get<double>(), Eigen::Map<const Vector>(mean.data(), p),
                      CovarianceEstimate{sym, method, params, eig_sym(sym)}};
      classes.push_back(std::move(g));
    }
    if (meta) {
      const auto& m = doc.at("meta");
      *meta = ModelMeta{m.at("p").get<Eigen::Index>(), m.at("c").get<int>(), m.at("seed").get<std::uint64_t>()};
    }
    return classes;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace cernn
