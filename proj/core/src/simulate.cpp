#include "face/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "face/aggregate.hpp"
#include "face/error.hpp"
#include "face/pipeline.hpp"
#include "face/target_step.hpp"

namespace face {

std::string ToString(Setting s) {
  switch (s) {
    case Setting::kI:
      return "I";
    case Setting::kII:
      return "II";
    case Setting::kIII:
      return "III";
    case Setting::kIV:
      return "IV";
  }
  return "?";
}

Setting ParseSetting(const std::string& text) {
  if (text == "I" || text == "1") return Setting::kI;
  if (text == "II" || text == "2") return Setting::kII;
  if (text == "III" || text == "3") return Setting::kIII;
  if (text == "IV" || text == "4") return Setting::kIV;
  throw ValidationError("unknown setting '" + text + "'; valid settings: I, II, III, IV");
}

void SimConfig::Validate() const {
  if (k < 2) throw ValidationError("K must be at least 2");
  if (p < 1) throw ValidationError("P must be at least 1");
  if (n_target < 8) throw ValidationError("n_target must be at least 8");
  if (n_source_min < 8 || n_source_max < n_source_min) {
    throw ValidationError("invalid source sample size range");
  }
  if (replications < 1) throw ValidationError("replications must be at least 1");
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
}

SimConfig SimConfigFromJson(const Json& j) {
  SimConfig c;
  try {
    if (j.contains("setting")) c.setting = ParseSetting(j.at("setting").get<std::string>());
    if (j.contains("k")) c.k = j.at("k").get<int>();
    if (j.contains("p")) c.p = j.at("p").get<int>();
    if (j.contains("n_target")) c.n_target = j.at("n_target").get<int>();
    if (j.contains("n_source_min")) c.n_source_min = j.at("n_source_min").get<int>();
    if (j.contains("n_source_max")) c.n_source_max = j.at("n_source_max").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("simulation config: ") + e.what());
  }
  c.Validate();
  return c;
}

Json ToJson(const SimConfig& c) {
  Json j;
  j["setting"] = ToString(c.setting);
  j["k"] = c.k;
  j["p"] = c.p;
  j["n_target"] = c.n_target;
  j["n_source_min"] = c.n_source_min;
  j["n_source_max"] = c.n_source_max;
  j["seed"] = c.seed;
  j["replications"] = c.replications;
  j["lambda_grid"] = c.lambda_grid.empty() ? DefaultLambdaGrid() : c.lambda_grid;
  return j;
}

Eigen::VectorXd LinSpaced(int p, double first, double last) {
  if (p == 1) return Eigen::VectorXd::Constant(1, first);
  return Eigen::VectorXd::LinSpaced(p, first, last);
}

double DrawSkewNormal(double kappa, double sigma, double nu, Rng& rng) {
  std::normal_distribution<double> normal;
  const double delta = nu / std::sqrt(1.0 + nu * nu);
  const double u0 = normal(rng);
  const double u1 = normal(rng);
  return kappa + sigma * (delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1);
}

double SkewNormalMean(double kappa, double sigma, double nu) {
  const double delta = nu / std::sqrt(1.0 + nu * nu);
  return kappa + sigma * delta * std::sqrt(2.0 / std::numbers::pi);
}

Eigen::MatrixXd GenerateCovariates(const SiteDesign& site, Rng& rng) {
  const auto p = site.kappa.size();
  Eigen::MatrixXd x(site.n, p);
  for (Eigen::Index i = 0; i < site.n; ++i) {
    for (Eigen::Index c = 0; c < p; ++c) {
      x(i, c) = DrawSkewNormal(site.kappa[c], 1.0, site.nu[c], rng);
    }
  }
  return x;
}

OutcomeCoefficients MakeOutcomeCoefficients(const Eigen::VectorXd& mu1) {
  const int p = static_cast<int>(mu1.size());
  OutcomeCoefficients c;
  c.mu1 = mu1;
  c.beta10 = LinSpaced(p, 0.4, 1.2) / p;
  c.beta11 = 2.0 * c.beta10;
  c.epsilon_sd = 1.5 * p;
  return c;
}

GeneratedOutcomes GenerateOutcomesAndTreatment(const Eigen::MatrixXd& x,
                                               const SiteDesign& site,
                                               const OutcomeCoefficients& coef,
                                               Rng& rng) {
  const Eigen::Index n = x.rows();
  std::normal_distribution<double> noise(0.0, coef.epsilon_sd);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GeneratedOutcomes out;
  out.y.resize(n);
  out.a.resize(n);
  out.y1.resize(n);
  out.y0.resize(n);
  out.propensity.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.row(i).transpose();
    const Eigen::VectorXd centred = xi - coef.mu1;
    const Eigen::VectorXd sq = xi.array().square().matrix();
    const double eps = noise(rng);
    out.y1[i] = centred.dot(coef.beta11) + sq.dot(site.beta21) + 3.0 + eps;
    out.y0[i] = centred.dot(coef.beta10) + sq.dot(site.beta20) + eps;
    const double eta = xi.dot(site.alpha1) + sq.dot(site.alpha2);
    out.propensity[i] = 1.0 / (1.0 + std::exp(-eta));
    out.a[i] = unit(rng) < out.propensity[i] ? 1.0 : 0.0;
    out.y[i] = out.a[i] == 1.0 ? out.y1[i] : out.y0[i];
  }
  return out;
}

std::vector<SiteDesign> DrawDesigns(const SimConfig& config, Rng& rng) {
  const int p = config.p;
  std::uniform_real_distribution<double> location(0.10, 0.15);
  std::uniform_int_distribution<int> source_n(config.n_source_min, config.n_source_max);
  std::bernoulli_distribution coin(0.5);

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd beta21 = LinSpaced(p, 0.2, 0.4);
  const Eigen::VectorXd alpha2 = LinSpaced(p, 0.12, -0.12);
  auto apply_setting = [&](SiteDesign& s, bool outcome, bool propensity) {
    s.beta21 = outcome ? beta21 : zero;
    s.beta20 = outcome ? Eigen::VectorXd(beta21 / 2.0) : zero;
    s.alpha2 = propensity ? alpha2 : zero;
  };

  std::vector<SiteDesign> designs(static_cast<std::size_t>(config.k));
  for (int k = 0; k < config.k; ++k) {
    SiteDesign& s = designs[static_cast<std::size_t>(k)];
    s.kappa.resize(p);
    for (int c = 0; c < p; ++c) s.kappa[c] = location(rng);
    s.nu = zero;
    if (k == 0) {
      s.site_id = "target";
      s.role = SiteRole::kTarget;
      s.n = config.n_target;
      s.alpha1 = LinSpaced(p, 0.4, -0.4);
    } else {
      std::ostringstream id;
      id << "source" << std::setw(2) << std::setfill('0') << k;
      s.site_id = id.str();
      s.role = SiteRole::kSource;
      s.n = source_n(rng);
      const double sign = coin(rng) ? 1.0 : -1.0;
      s.nu.setConstant(sign * 4.0 / p);
      s.alpha1 = LinSpaced(p, 0.5, -0.5);
    }
    switch (config.setting) {
      case Setting::kI:
        apply_setting(s, false, false);
        break;
      case Setting::kII:
        apply_setting(s, true, false);
        break;
      case Setting::kIII:
        apply_setting(s, false, true);
        break;
      case Setting::kIV:
        s.misspecified = k > 0 && k % 2 == 0;
        apply_setting(s, s.misspecified, s.misspecified);
        break;
    }
    if (config.setting == Setting::kII || config.setting == Setting::kIII) {
      s.misspecified = true;
    }
  }
  return designs;
}

double TrueTate(const SiteDesign& target) {
  // Target covariates are normal: E[X²] = κ² + 1.
  double tate = 3.0;
  for (Eigen::Index c = 0; c < target.kappa.size(); ++c) {
    tate += (target.beta21[c] - target.beta20[c]) *
            (target.kappa[c] * target.kappa[c] + 1.0);
  }
  return tate;
}

double MonteCarloTate(const SiteDesign& target, const OutcomeCoefficients& coef,
                      int draws, Rng& rng) {
  SiteDesign d = target;
  d.n = draws;
  const Eigen::MatrixXd x = GenerateCovariates(d, rng);
  const GeneratedOutcomes o = GenerateOutcomesAndTreatment(x, d, coef, rng);
  return (o.y1 - o.y0).mean();
}

Replicate GenerateReplicate(const SimConfig& config, std::uint64_t index) {
  Rng rng = MakeStream(config.seed, "replication", index);
  Replicate rep;
  rep.designs = DrawDesigns(config, rng);
  const OutcomeCoefficients coef = MakeOutcomeCoefficients(rep.designs[0].kappa);
  for (const auto& d : rep.designs) {
    const Eigen::MatrixXd x = GenerateCovariates(d, rng);
    const GeneratedOutcomes o = GenerateOutcomesAndTreatment(x, d, coef, rng);
    rep.sites.emplace_back(d.site_id, o.y, o.a, x, d.role);
  }
  rep.true_tate = TrueTate(rep.designs[0]);
  return rep;
}

ReplicationRecord RunReplication(const SimConfig& config, std::uint64_t index) {
  ReplicationRecord rec;
  rec.index = index;
  try {
    const Replicate rep = GenerateReplicate(config, index);
    rec.true_tate = rep.true_tate;

    SiteOptions site_options;
    site_options.split_seed = MakeStream(config.seed, "split-seed", index)();
    std::vector<TargetReport> targets;
    std::vector<SourceReport> sources;
    for (const auto& s : rep.sites) {
      if (s.role() == SiteRole::kTarget) targets.push_back(RunTargetSite(s, site_options));
    }
    const Broadcast broadcast = MakeBroadcast(targets);
    for (const auto& s : rep.sites) {
      if (s.role() == SiteRole::kSource) {
        sources.push_back(RunSourceSite(s, broadcast, site_options));
      }
    }

    AggregationProblem full;
    for (const auto& t : targets) full.targets.push_back(t.full);
    for (const auto& s : sources) full.sources.push_back(s.full);

    LeadingOptions leading;
    if (!config.lambda_grid.empty()) leading.lambda.grid = config.lambda_grid;
    const FaceRun run = RunLeading(targets, sources, leading);
    const AggregationResult& face = run.result;
    rec.excluded_sites = static_cast<int>(run.excluded_sites.size());

    const AggregationResult target =
        EvaluateWeights(full, Eigen::VectorXd::Zero(face.eta.size()));

    // SS pools every site's own AIPW estimate by sample size, ignoring
    // covariate shift.
    const Basis basis{Basis::Expansion::kIdentity, config.p};
    double ss_n = 0.0, ss_sum = 0.0, ss_var = 0.0;
    std::vector<std::pair<double, double>> local;  // (n, estimate)
    std::vector<double> local_var;
    for (const auto& s : rep.sites) {
      TargetSummary own;
      if (s.role() == SiteRole::kTarget) {
        own = targets.front().full;
      } else {
        try {
          own = SummarizeTarget(s, basis, site_options.variance);
        } catch (const std::runtime_error&) {
          continue;
        }
      }
      const double v = own.sigma_hat(0, 0) + 2.0 * own.sigma_hat(0, 1) + own.sigma_hat(1, 1);
      local.emplace_back(static_cast<double>(own.n_k), own.big_delta_hat);
      local_var.push_back(v);
      ss_n += static_cast<double>(own.n_k);
    }
    for (std::size_t s = 0; s < local.size(); ++s) {
      const double w = local[s].first / ss_n;
      ss_sum += w * local[s].second;
      ss_var += w * w * local_var[s];
    }
    AggregationResult ss;
    ss.delta_face = ss_sum;
    ss.n_total = static_cast<long long>(ss_n);
    ss.v_hat = ss_var * ss_n;
    ss.ci = FaceCi(ss_sum, ss.v_hat, ss.n_total, 0.05);

    auto hit = [&](const AggregationResult& r) {
      return r.ci.lower <= rep.true_tate && rep.true_tate <= r.ci.upper;
    };
    rec.target = target.delta_face;
    rec.ss = ss.delta_face;
    rec.face = face.delta_face;
    rec.target_var = target.v_hat / target.n_total;
    rec.ss_var = ss.v_hat / ss.n_total;
    rec.face_var = face.v_hat / face.n_total;
    rec.target_hit = hit(target);
    rec.ss_hit = hit(ss);
    rec.face_hit = hit(face);
    rec.lambda = face.lambda_used;
    for (std::size_t s = 0; s < face.source_ids.size(); ++s) {
      const auto it = std::find_if(rep.designs.begin(), rep.designs.end(),
                                   [&](const SiteDesign& d) {
                                     return d.site_id == face.source_ids[s];
                                   });
      const double w = face.eta[static_cast<Eigen::Index>(s)];
      (it != rep.designs.end() && it->misspecified ? rec.eta_misspecified
                                                   : rec.eta_correct) += w;
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

namespace {

EstimatorStats Summarize(const std::vector<const ReplicationRecord*>& recs,
                         double ReplicationRecord::*estimate,
                         double ReplicationRecord::*variance,
                         bool ReplicationRecord::*hit) {
  EstimatorStats st;
  const double n = static_cast<double>(recs.size());
  if (recs.empty()) return st;
  double sum = 0.0, sq = 0.0, hits = 0.0, var = 0.0;
  for (const auto* r : recs) {
    const double err = r->*estimate - r->true_tate;
    sum += err;
    sq += err * err;
    hits += r->*hit ? 1.0 : 0.0;
    var += r->*variance;
  }
  st.bias = sum / n;
  st.rmse = std::sqrt(sq / n);
  st.coverage = 100.0 * hits / n;
  st.mean_variance_estimate = var / n;
  if (recs.size() > 1) {
    double centred = 0.0;
    for (const auto* r : recs) {
      const double d = r->*estimate - r->true_tate - st.bias;
      centred += d * d;
    }
    st.empirical_variance = centred / (n - 1.0);
  }
  return st;
}

Json ToJson(const EstimatorStats& s) {
  Json j;
  j["bias"] = s.bias;
  j["rmse"] = s.rmse;
  j["coverage"] = s.coverage;
  j["mean_variance_estimate"] = s.mean_variance_estimate;
  j["empirical_variance"] =
      s.empirical_variance ? Json(*s.empirical_variance) : Json(nullptr);
  return j;
}

}  // namespace

SimReport RunStudy(const SimConfig& config) {
  config.Validate();
  SimReport report;
  report.config = config;
  report.records.resize(static_cast<std::size_t>(config.replications));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < config.replications; i = next++) {
      report.records[static_cast<std::size_t>(i)] =
          RunReplication(config, static_cast<std::uint64_t>(i));
    }
  };
  const int jobs = std::min(config.jobs, config.replications);
  std::vector<std::thread> threads;
  for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<const ReplicationRecord*> ok;
  double truth = 0.0, eta_mis = 0.0, eta_cor = 0.0;
  for (const auto& r : report.records) {
    if (!r.ok) {
      ++report.failures;
      continue;
    }
    ok.push_back(&r);
    truth += r.true_tate;
    eta_mis += r.eta_misspecified;
    eta_cor += r.eta_correct;
    ++report.lambda_counts[r.lambda];
  }
  report.completed = static_cast<int>(ok.size());
  if (!ok.empty()) {
    const double n = static_cast<double>(ok.size());
    report.true_tate = truth / n;
    report.mean_eta_misspecified = eta_mis / n;
    report.mean_eta_correct = eta_cor / n;
  }
  using R = ReplicationRecord;
  report.target = Summarize(ok, &R::target, &R::target_var, &R::target_hit);
  report.ss = Summarize(ok, &R::ss, &R::ss_var, &R::ss_hit);
  report.face = Summarize(ok, &R::face, &R::face_var, &R::face_hit);
  return report;
}

Json ToJson(const SimReport& report, bool include_records) {
  Json j;
  j["config"] = ToJson(report.config);
  j["true_tate"] = report.true_tate;
  j["estimators"] = {{"Target", ToJson(report.target)},
                     {"SS", ToJson(report.ss)},
                     {"FACE", ToJson(report.face)}};
  j["completed"] = report.completed;
  j["failures"] = report.failures;
  Json lambdas = Json::array();
  for (const auto& [lambda, count] : report.lambda_counts) {
    lambdas.push_back({{"lambda", lambda}, {"count", count}});
  }
  Json diag;
  diag["lambda_counts"] = lambdas;
  diag["mean_eta_misspecified"] = report.mean_eta_misspecified;
  diag["mean_eta_correct"] = report.mean_eta_correct;
  if (report.face.empirical_variance && *report.face.empirical_variance > 0.0) {
    diag["face_variance_ratio"] =
        report.face.mean_variance_estimate / *report.face.empirical_variance;
  } else {
    diag["face_variance_ratio"] = nullptr;
  }
  diag["assumptions"] = {
      {"mu1", "target covariate mean (target locations)"},
      {"beta20", "beta21 / 2"},
      {"kappa", "iid Uniform(0.10, 0.15) per site, covariate and replication"},
      {"source_skewness", "random sign per site times 4/p, p the covariate index"},
      {"setting_iv_misspecified", "even-numbered source sites"}};
  Json errors = Json::array();
  for (const auto& r : report.records) {
    if (!r.ok) errors.push_back({{"index", r.index}, {"error", r.error}});
  }
  diag["errors"] = errors;
  j["diagnostics"] = diag;
  if (include_records) {
    Json recs = Json::array();
    for (const auto& r : report.records) {
      if (!r.ok) continue;
      recs.push_back({{"index", r.index},
                      {"true_tate", r.true_tate},
                      {"target", r.target},
                      {"ss", r.ss},
                      {"face", r.face},
                      {"face_var", r.face_var},
                      {"face_hit", r.face_hit},
                      {"lambda", r.lambda},
                      {"eta_misspecified", r.eta_misspecified},
                      {"eta_correct", r.eta_correct}});
    }
    j["replications"] = recs;
  }
  return j;
}

std::string FormatTable(const SimReport& report) {
  std::ostringstream out;
  out << "Setting " << ToString(report.config.setting) << ", K = " << report.config.k
      << ", " << report.completed << " replications";
  if (report.failures > 0) out << " (" << report.failures << " failed)";
  out << "\n";
  out << std::left << std::setw(10) << "" << std::right << std::setw(10) << "Bias"
      << std::setw(10) << "RMSE" << std::setw(10) << "Cov." << "\n";
  auto row = [&](const char* name, const EstimatorStats& s) {
    out << std::left << std::setw(10) << name << std::right << std::fixed
        << std::setprecision(2) << std::setw(10) << s.bias << std::setw(10) << s.rmse
        << std::setw(10) << s.coverage << "\n";
  };
  row("Target", report.target);
  row("SS", report.ss);
  row("FACE", report.face);
  return out.str();
}

}  // namespace face
