#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "face/summaries.hpp"

namespace face {

struct AggregationProblem {
  std::vector<TargetSummary> targets;
  // Unusable sources are ignored by every function below.
  std::vector<SourceSummary> sources;
  double lambda = 0.0;
};

struct SolverOptions {
  double tolerance = 1e-10;  // max coordinate change per sweep
  int max_sweeps = 10000;
  double kkt_tolerance = 1e-6;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct AggregationResult {
  std::vector<std::string> source_ids;  // usable sources, in problem order
  std::vector<long long> source_n;
  Eigen::VectorXd eta;
  double delta_face = 0.0;
  double delta_target = 0.0;  // Δ̂_T,T, the anchor
  double v_hat = 0.0;
  ConfidenceInterval ci;
  double alpha = 0.05;
  double lambda_used = 0.0;
  long long n_total = 0;
  std::vector<std::string> selected;
  std::vector<double> objective_trace;
  int sweeps = 0;
  bool converged = true;
  double kkt_residual = 0.0;
  std::vector<std::string> warnings;
};

/// The quadratic part of the aggregation objective written as
/// ηᵀAη + 2bᵀη + c, together with the penalty weights
/// w_k = (Δ̂_T,k − Δ̂_T,T)².
struct AggregationQuadratic {
  TargetSummary target;  // combined over target sites, Σ̂ floored to PSD
  std::vector<const SourceSummary*> sources;
  long long n_total = 0;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  double c = 0.0;
  Eigen::VectorXd penalty_weights;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return b.size(); }
  double Smooth(const Eigen::VectorXd& eta) const;
  double Objective(const Eigen::VectorXd& eta, double lambda) const;
  Eigen::VectorXd SmoothGradient(const Eigen::VectorXd& eta) const;
};

AggregationQuadratic BuildQuadratic(const AggregationProblem& problem);

/// Objective value at η (penalty included).
double Objective(const AggregationProblem& problem, const Eigen::VectorXd& eta);

/// Largest violation of the lasso optimality conditions at η.
double KktResidual(const AggregationQuadratic& quad, const Eigen::VectorXd& eta,
                   double lambda);

/// Minimizes the penalized aggregation objective by cyclic coordinate descent
/// with exact soft-threshold updates, then forms the estimate, variance and
/// (1 − alpha) interval.
AggregationResult SolveEta(const AggregationProblem& problem,
                           const SolverOptions& options = {},
                           double alpha = 0.05);

/// Fills estimate, variance and interval for a given η (used for fixed-weight
/// estimators such as sample-size weighting).
AggregationResult EvaluateWeights(const AggregationProblem& problem,
                                  const Eigen::VectorXd& eta,
                                  double alpha = 0.05);

/// (1 − Ση)Δ̂_T,T + Σ η_k Δ̂_T,k with Δ̂_T,k = M̂_T,T + δ̂_T,k.
double FaceEstimate(const AggregationProblem& problem,
                    const Eigen::VectorXd& eta);
/// M̂_T,T + (1 − Ση)δ̂_T,T + Σ η_k δ̂_T,k; equal to FaceEstimate.
double FaceEstimateAugmented(const AggregationProblem& problem,
                             const Eigen::VectorXd& eta);

/// V̂ = N Σ η_k² σ̂_k² + N hᵀ Σ̂ h, h = (1, 1 − Ση, Σ η_k d̂_kᵀ).
double FaceVariance(const AggregationProblem& problem,
                    const Eigen::VectorXd& eta);

/// delta ± z_{α/2} √(V̂/N). alpha must lie in (0, 1].
ConfidenceInterval FaceCi(double delta_face, double v_hat, long long n_total,
                          double alpha);

double NormalQuantile(double p);

/// λ used when cross-validation is off: N^{1/3}.
double DefaultLambda(long long n_total);

/// The tuning grid used in the simulation study.
std::vector<double> DefaultLambdaGrid();

/// Estimated mean squared error of the aggregate built with η on
/// `validation`: its variance plus a debiased squared discrepancy between
/// the weighted source estimates and the target anchor.
double ValidationLoss(const AggregationProblem& validation,
                      const std::vector<std::string>& ids,
                      const Eigen::VectorXd& eta);

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> validation_loss;
};

/// Solves η on the training summaries for each λ in `grid` and keeps the λ
/// with the smallest validation loss; ties go to the smaller λ. Throws
/// ValidationError on an empty grid.
LambdaSelection SelectLambda(const AggregationProblem& train,
                             const AggregationProblem& validation,
                             const std::vector<double>& grid,
                             const SolverOptions& options = {});

}  // namespace face
