#pragma once

#include <Eigen/Dense>

#include "face/nuisance.hpp"
#include "face/site_data.hpp"

namespace face {

inline constexpr double kPropensityFloor = 0.01;

/// Per-row quantities of the doubly robust estimator for one site, given its
/// fitted nuisance models.
struct AipwRows {
  Eigen::MatrixXd design;      // [1, X]
  Eigen::VectorXd propensity;  // truncated to [0.01, 0.99]
  // dπ/dη of the truncated propensity; zero on truncated rows.
  Eigen::VectorXd propensity_slope;
  Eigen::VectorXd mu1, mu0;    // m̂(1, x), m̂(0, x)
  Eigen::VectorXd dmu1, dmu0;  // derivatives w.r.t. the linear predictor
  // A/π (Y − m̂₁) − (1−A)/(1−π) (Y − m̂₀)
  Eigen::VectorXd residual;
  long long truncations = 0;
};

AipwRows ComputeAipwRows(const SiteData& data, const NuisanceFits& fits);

/// Which influence-function approximation backs the variance summaries.
enum class InfluenceForm {
  // Includes the first-order effect of estimating the propensity, outcome
  // and density-ratio parameters.
  kNuisanceCorrected,
  // Treats the fitted nuisance models as fixed.
  kPlugIn,
};

/// Influence rows of the weighted augmentation n⁻¹ Σ vᵢ rᵢ, excluding any
/// density-ratio term. `weights` is all ones for a target site.
Eigen::VectorXd AugmentationInfluence(const SiteData& data,
                                      const NuisanceFits& fits,
                                      const AipwRows& rows,
                                      const Eigen::VectorXd& weights,
                                      InfluenceForm form);

/// Per-row influence of the fitted parameters: column i holds IFᵢ so that
/// θ̂ − θ ≈ n⁻¹ Σ IFᵢ.
struct NuisanceInfluence {
  Eigen::MatrixXd propensity;  // (p+1) x n
  Eigen::MatrixXd treated;
  Eigen::MatrixXd control;
};

NuisanceInfluence ComputeNuisanceInfluence(const SiteData& data,
                                           const NuisanceFits& fits,
                                           const AipwRows& rows);

}  // namespace face
