#include "face/serialization.hpp"

#include "face/error.hpp"

namespace face {
namespace {

const Json& Field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

double Number(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  if (!v.is_number()) throw ParseError(std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

long long Integer(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  if (!v.is_number_integer()) {
    throw ParseError(std::string("field '") + key + "' is not an integer");
  }
  return v.get<long long>();
}

std::string String(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  if (!v.is_string()) throw ParseError(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

}  // namespace

Json VectorToJson(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json MatrixToJson(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.push_back(VectorToJson(m.row(r).transpose()));
  }
  return out;
}

Eigen::VectorXd VectorFromJson(const Json& j) {
  if (!j.is_array()) throw ParseError("expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError("expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd MatrixFromJson(const Json& j) {
  if (!j.is_array()) throw ParseError("expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = VectorFromJson(j[static_cast<std::size_t>(r)]);
    if (row.size() != cols) throw ParseError("ragged matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

Json ToJson(const TargetSummary& s) {
  Json j;
  j["site_id"] = s.site_id;
  j["n_k"] = s.n_k;
  j["m_hat"] = s.m_hat;
  j["delta_hat"] = s.delta_hat;
  j["big_delta_hat"] = s.big_delta_hat;
  j["psi_bar"] = VectorToJson(s.psi_bar);
  j["sigma_hat"] = MatrixToJson(s.sigma_hat);
  j["propensity_truncations"] = s.propensity_truncations;
  return j;
}

Json ToJson(const SourceSummary& s) {
  Json j;
  j["site_id"] = s.site_id;
  j["n_k"] = s.n_k;
  j["delta_hat"] = s.delta_hat;
  j["sigma2_hat"] = s.sigma2_hat;
  j["d_hat"] = VectorToJson(s.d_hat);
  j["usable"] = s.usable;
  j["note"] = s.note;
  j["propensity_truncations"] = s.propensity_truncations;
  return j;
}

TargetSummary TargetSummaryFromJson(const Json& j) {
  TargetSummary s;
  s.site_id = String(j, "site_id");
  s.n_k = Integer(j, "n_k");
  s.m_hat = Number(j, "m_hat");
  s.delta_hat = Number(j, "delta_hat");
  s.big_delta_hat = Number(j, "big_delta_hat");
  s.psi_bar = VectorFromJson(Field(j, "psi_bar"));
  s.sigma_hat = MatrixFromJson(Field(j, "sigma_hat"));
  if (j.contains("propensity_truncations")) {
    s.propensity_truncations = Integer(j, "propensity_truncations");
  }
  try {
    Validate(s);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  return s;
}

SourceSummary SourceSummaryFromJson(const Json& j) {
  SourceSummary s;
  s.site_id = String(j, "site_id");
  s.n_k = Integer(j, "n_k");
  s.delta_hat = Number(j, "delta_hat");
  s.sigma2_hat = Number(j, "sigma2_hat");
  s.d_hat = VectorFromJson(Field(j, "d_hat"));
  if (j.contains("usable")) s.usable = Field(j, "usable").get<bool>();
  if (j.contains("note")) s.note = String(j, "note");
  if (j.contains("propensity_truncations")) {
    s.propensity_truncations = Integer(j, "propensity_truncations");
  }
  try {
    Validate(s);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  return s;
}

Json ToJson(const TargetReport& r) {
  Json j = ToJson(r.full);
  if (r.train && r.validation) {
    j["folds"] = {{"train", ToJson(*r.train)},
                  {"validation", ToJson(*r.validation)}};
  }
  return j;
}

Json ToJson(const SourceReport& r) {
  Json j = ToJson(r.full);
  if (r.train && r.validation) {
    j["folds"] = {{"train", ToJson(*r.train)},
                  {"validation", ToJson(*r.validation)}};
  }
  return j;
}

TargetReport TargetReportFromJson(const Json& j) {
  TargetReport r;
  r.full = TargetSummaryFromJson(j);
  if (j.contains("folds")) {
    const Json& f = j.at("folds");
    r.train = TargetSummaryFromJson(Field(f, "train"));
    r.validation = TargetSummaryFromJson(Field(f, "validation"));
  }
  return r;
}

SourceReport SourceReportFromJson(const Json& j) {
  SourceReport r;
  r.full = SourceSummaryFromJson(j);
  if (j.contains("folds")) {
    const Json& f = j.at("folds");
    r.train = SourceSummaryFromJson(Field(f, "train"));
    r.validation = SourceSummaryFromJson(Field(f, "validation"));
  }
  return r;
}

Json ToJson(const Broadcast& b) {
  Json j;
  j["psi_bar"] = VectorToJson(b.psi_bar);
  if (b.psi_bar_train && b.psi_bar_validation) {
    j["psi_bar_train"] = VectorToJson(*b.psi_bar_train);
    j["psi_bar_validation"] = VectorToJson(*b.psi_bar_validation);
  }
  j["n_target"] = b.n_target;
  j["target_sites"] = b.target_sites;
  return j;
}

Broadcast BroadcastFromJson(const Json& j) {
  Broadcast b;
  b.psi_bar = VectorFromJson(Field(j, "psi_bar"));
  if (j.contains("psi_bar_train") && j.contains("psi_bar_validation")) {
    b.psi_bar_train = VectorFromJson(j.at("psi_bar_train"));
    b.psi_bar_validation = VectorFromJson(j.at("psi_bar_validation"));
  }
  b.n_target = Integer(j, "n_target");
  const Json& sites = Field(j, "target_sites");
  if (!sites.is_array()) throw ParseError("target_sites must be an array");
  for (const auto& s : sites) b.target_sites.push_back(s.get<std::string>());
  if (b.psi_bar.size() < 1 || b.psi_bar[0] != 1.0) {
    throw ParseError("broadcast psi_bar must start with the intercept 1");
  }
  return b;
}

Json ToJson(const FaceRun& run) {
  const AggregationResult& r = run.result;
  Json j;
  j["delta_face"] = r.delta_face;
  j["delta_target"] = r.delta_target;
  j["v_hat"] = r.v_hat;
  j["ci"] = {r.ci.lower, r.ci.upper};
  j["alpha"] = r.alpha;
  j["lambda_used"] = r.lambda_used;
  j["n_total"] = r.n_total;
  Json eta = Json::array();
  for (std::size_t k = 0; k < r.source_ids.size(); ++k) {
    eta.push_back({{"site_id", r.source_ids[k]},
                   {"n_k", r.source_n[k]},
                   {"eta", r.eta[static_cast<Eigen::Index>(k)]}});
  }
  j["eta"] = eta;
  j["selected"] = r.selected;
  j["objective_trace"] = r.objective_trace;
  j["sweeps"] = r.sweeps;
  j["converged"] = r.converged;
  j["kkt_residual"] = r.kkt_residual;
  j["warnings"] = r.warnings;
  j["excluded_sites"] = run.excluded_sites;
  if (run.selection) {
    j["lambda_selection"] = {{"grid", run.selection->grid},
                             {"validation_loss", run.selection->validation_loss},
                             {"lambda", run.selection->lambda}};
  } else {
    j["lambda_selection"] = nullptr;
  }
  return j;
}

}  // namespace face
