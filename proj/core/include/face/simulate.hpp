#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "face/rng.hpp"
#include "face/serialization.hpp"
#include "face/site_data.hpp"

namespace face {

enum class Setting { kI, kII, kIII, kIV };

std::string ToString(Setting s);
/// Accepts "I".."IV" (also "1".."4"); the error lists the valid names.
Setting ParseSetting(const std::string& text);

struct SimConfig {
  Setting setting = Setting::kI;
  int k = 10;               // sites, one of which is the target
  int p = 10;
  int n_target = 200;
  int n_source_min = 100;
  int n_source_max = 300;
  std::uint64_t seed = 7;
  int replications = 1000;
  std::vector<double> lambda_grid;  // empty: the default grid
  int jobs = 1;

  void Validate() const;
};

SimConfig SimConfigFromJson(const Json& j);
Json ToJson(const SimConfig& c);

/// Generative parameters of one site.
struct SiteDesign {
  std::string site_id;
  SiteRole role = SiteRole::kSource;
  int n = 0;
  Eigen::VectorXd kappa;   // location per covariate
  Eigen::VectorXd nu;      // skewness per covariate
  Eigen::VectorXd alpha1;  // linear propensity coefficients
  Eigen::VectorXd alpha2;  // quadratic propensity coefficients
  Eigen::VectorXd beta21;  // quadratic outcome coefficients, treated
  Eigen::VectorXd beta20;  // quadratic outcome coefficients, control
  bool misspecified = false;
};

/// P values evenly spaced from `first` to `last` (a single value is `first`).
Eigen::VectorXd LinSpaced(int p, double first, double last);

/// Skew-normal draws κ + σ(δ|U₀| + √(1−δ²)U₁), δ = ν/√(1+ν²).
double DrawSkewNormal(double kappa, double sigma, double nu, Rng& rng);
double SkewNormalMean(double kappa, double sigma, double nu);

/// n × P covariates for one site, column p drawn from SN(κ_p, 1, ν_p).
Eigen::MatrixXd GenerateCovariates(const SiteDesign& site, Rng& rng);

struct OutcomeCoefficients {
  Eigen::VectorXd mu1;     // centring of the linear term
  Eigen::VectorXd beta11;  // 2·(0.4,…,1.2)/P
  Eigen::VectorXd beta10;  // (0.4,…,1.2)/P
  double epsilon_sd = 0.0; // 1.5·P
};

OutcomeCoefficients MakeOutcomeCoefficients(const Eigen::VectorXd& mu1);

struct GeneratedOutcomes {
  Eigen::VectorXd y;
  Eigen::VectorXd a;
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
  Eigen::VectorXd propensity;
};

GeneratedOutcomes GenerateOutcomesAndTreatment(const Eigen::MatrixXd& x,
                                               const SiteDesign& site,
                                               const OutcomeCoefficients& coef,
                                               Rng& rng);

/// One replication's worth of site designs (site 0 is the target).
std::vector<SiteDesign> DrawDesigns(const SimConfig& config, Rng& rng);

/// Population TATE over the target covariate law, in closed form:
/// 3 + Σ_p (β₂₁ − β₂₀)_p E[X_p²].
double TrueTate(const SiteDesign& target);

/// Monte Carlo version of TrueTate from `draws` target-population draws.
double MonteCarloTate(const SiteDesign& target, const OutcomeCoefficients& coef,
                      int draws, Rng& rng);

struct Replicate {
  std::vector<SiteDesign> designs;
  std::vector<SiteData> sites;
  double true_tate = 0.0;
};

Replicate GenerateReplicate(const SimConfig& config, std::uint64_t index);

struct EstimatorStats {
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // percent
  std::optional<double> empirical_variance;
  double mean_variance_estimate = 0.0;  // mean of V̂/N
};

struct ReplicationRecord {
  std::uint64_t index = 0;
  bool ok = false;
  std::string error;
  double true_tate = 0.0;
  double target = 0.0, ss = 0.0, face = 0.0;
  double target_var = 0.0, ss_var = 0.0, face_var = 0.0;  // V̂/N
  bool target_hit = false, ss_hit = false, face_hit = false;
  double lambda = 0.0;
  double eta_misspecified = 0.0;  // total weight on misspecified sources
  double eta_correct = 0.0;
  int excluded_sites = 0;
};

struct SimReport {
  SimConfig config;
  double true_tate = 0.0;  // mean over completed replications
  EstimatorStats target, ss, face;
  int completed = 0;
  int failures = 0;
  std::map<double, int> lambda_counts;
  double mean_eta_misspecified = 0.0;
  double mean_eta_correct = 0.0;
  std::vector<ReplicationRecord> records;
};

ReplicationRecord RunReplication(const SimConfig& config, std::uint64_t index);

/// Replications run on `config.jobs` threads; each draws from its own stream,
/// so the report does not depend on the number of jobs.
SimReport RunStudy(const SimConfig& config);

Json ToJson(const SimReport& report, bool include_records = true);
std::string FormatTable(const SimReport& report);

}  // namespace face
