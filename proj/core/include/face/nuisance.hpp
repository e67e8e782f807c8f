#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "face/site_data.hpp"

namespace face {

struct FitOptions {
  // Convergence threshold on the gradient infinity-norm (per observation).
  double tolerance = 1e-8;
  int max_iterations = 100;
};

struct LogisticFit {
  Eigen::VectorXd coef;  // intercept first
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;
  // Loss after every accepted Newton step (first entry is the start point).
  std::vector<double> loss_trace;
};

struct LinearFit {
  Eigen::VectorXd coef;
  double residual_variance = 0.0;
};

struct DensityRatioFit {
  Eigen::VectorXd gamma;
  double moment_residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

double Expit(double t);

/// Logistic regression by damped Newton on the mean loss
/// log(1 + e^η) − yη over `subset` (all rows when empty).
/// Perfect separation is reported through `converged == false`.
/// Throws ValidationError on a rank-deficient design or a single class.
LogisticFit FitLogistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                        std::span<const Eigen::Index> subset = {},
                        const FitOptions& options = {});

/// Ordinary least squares over `subset`. Throws ValidationError when the
/// design restricted to the subset is rank deficient.
LinearFit FitLinear(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                    std::span<const Eigen::Index> subset = {});

/// Exponential-tilt density ratio ω(x) = exp(γᵀψ(x)) fitted by moment
/// matching: mean over the site of ω ψ equals `psi_bar_target`. Solved as
/// the convex problem min mean(exp(γᵀψ)) − γᵀψ̄ with step-halving Newton.
DensityRatioFit FitDensityRatio(const Eigen::MatrixXd& psi,
                                const Eigen::VectorXd& psi_bar_target,
                                const FitOptions& options = {});

Eigen::VectorXd DensityRatioWeights(const Eigen::MatrixXd& psi,
                                    const Eigen::VectorXd& gamma);

/// Outcome regression for one arm: logistic for binary outcomes, linear
/// otherwise.
struct OutcomeModel {
  OutcomeFamily family = OutcomeFamily::kContinuous;
  Eigen::VectorXd coef;
  bool converged = true;

  Eigen::VectorXd Mean(const Eigen::MatrixXd& design) const;
  // d mean / d linear predictor at every row.
  Eigen::VectorXd MeanDerivative(const Eigen::MatrixXd& design) const;
};

struct NuisanceFits {
  LogisticFit propensity;
  OutcomeModel treated;
  OutcomeModel control;

  bool converged() const {
    return propensity.converged && treated.converged && control.converged;
  }
};

/// Propensity score on all rows and one outcome regression per arm, all on
/// the [1, X] design.
NuisanceFits FitNuisances(const SiteData& data, const FitOptions& options = {});

}  // namespace face
