#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "face/aggregate.hpp"
#include "face/site_data.hpp"
#include "face/summaries.hpp"
#include "face/target_step.hpp"

namespace face {

struct SiteOptions {
  VarianceOptions variance;
  // Also summarize a random 50/50 split of the site so the leading site can
  // select λ by cross-validation.
  bool cross_validation_folds = true;
  std::uint64_t split_seed = 7;
};

struct FoldSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};

/// Random half split of a site's rows, seeded by (seed, site_id), with both
/// treatment arms present in each half.
FoldSplit SplitRows(const SiteData& data, std::uint64_t seed);

struct TargetReport {
  TargetSummary full;
  std::optional<TargetSummary> train;
  std::optional<TargetSummary> validation;
};

struct SourceReport {
  SourceSummary full;
  std::optional<SourceSummary> train;
  std::optional<SourceSummary> validation;
};

/// Covariate summary the target sites send to every source site: the
/// N_T-weighted mean of ψ over all target rows, plus the same for each fold.
struct Broadcast {
  Eigen::VectorXd psi_bar;
  std::optional<Eigen::VectorXd> psi_bar_train;
  std::optional<Eigen::VectorXd> psi_bar_validation;
  long long n_target = 0;
  std::vector<std::string> target_sites;
};

TargetReport RunTargetSite(const SiteData& data, const SiteOptions& options);

/// Throws ValidationError on an empty list or duplicate site ids.
Broadcast MakeBroadcast(const std::vector<TargetReport>& targets);

SourceReport RunSourceSite(const SiteData& data, const Broadcast& broadcast,
                           const SiteOptions& options);

struct LambdaConfig {
  enum class Mode { kFixed, kCrossValidate, kDefault };
  Mode mode = Mode::kCrossValidate;
  double value = 0.0;
  std::vector<double> grid = DefaultLambdaGrid();
};

struct LeadingOptions {
  LambdaConfig lambda;
  double alpha = 0.05;
  SolverOptions solver;
};

struct FaceRun {
  AggregationResult result;
  std::optional<LambdaSelection> selection;
  std::vector<std::string> excluded_sites;  // unusable source summaries
};

/// Step three. Sources are ordered by site id so the outcome does not depend
/// on arrival order. Throws ValidationError when cross-validation is requested
/// but some summary lacks its folds.
FaceRun RunLeading(std::vector<TargetReport> targets,
                   std::vector<SourceReport> sources,
                   const LeadingOptions& options);

/// All three steps in one process, without any transport.
FaceRun RunInProcess(const std::vector<SiteData>& sites,
                     const SiteOptions& site_options,
                     const LeadingOptions& leading_options);

}  // namespace face
