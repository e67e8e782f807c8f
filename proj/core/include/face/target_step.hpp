#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "face/aipw.hpp"
#include "face/nuisance.hpp"
#include "face/site_data.hpp"
#include "face/summaries.hpp"

namespace face {

enum class VarianceMethod { kInfluence, kBootstrap };

struct VarianceOptions {
  VarianceMethod method = VarianceMethod::kInfluence;
  InfluenceForm form = InfluenceForm::kNuisanceCorrected;
  int bootstrap_replicates = 200;
  std::uint64_t seed = 7;
  FitOptions fit;
};

inline constexpr int kMinBootstrapReplicates = 50;

/// Centered influence rows of a target site: ζ for M̂, ξ for δ̂, and ψ(X).
struct InfluenceRows {
  Eigen::VectorXd zeta;
  Eigen::VectorXd xi;
  Eigen::MatrixXd psi_rows;
};

struct TargetComponents {
  double m_hat = 0.0;
  double delta_hat = 0.0;
  Eigen::VectorXd psi_bar;
  long long truncations = 0;
};

TargetComponents ComputeTargetComponents(const SiteData& data,
                                         const NuisanceFits& fits,
                                         const Basis& basis);

InfluenceRows TargetInfluence(const SiteData& data, const NuisanceFits& fits,
                              const Basis& basis,
                              InfluenceForm form = InfluenceForm::kNuisanceCorrected);

/// Covariance of (M̂, δ̂, ψ̄ᵀ)ᵀ. The influence method returns n⁻² Σ UᵢUᵢᵀ with
/// Uᵢ = (ζᵢ, ξᵢ, ψ(Xᵢ)ᵀ − ψ̄ᵀ)ᵀ; the bootstrap method refits every nuisance
/// model on each within-site resample. Throws ValidationError when fewer
/// than 50 replicates are requested.
Eigen::MatrixXd TargetSigma(const SiteData& data, const NuisanceFits& fits,
                            const Basis& basis, const VarianceOptions& options);

/// Step one for a target site: fits nuisances, computes the components and
/// their covariance.
TargetSummary SummarizeTarget(const SiteData& data, const Basis& basis,
                              const VarianceOptions& options = {});

TargetSummary SummarizeTarget(const SiteData& data, const NuisanceFits& fits,
                              const Basis& basis,
                              const VarianceOptions& options = {});

}  // namespace face
