#pragma once

#include <Eigen/Dense>

#include "face/nuisance.hpp"
#include "face/site_data.hpp"
#include "face/summaries.hpp"
#include "face/target_step.hpp"

namespace face {

// Source-site quantities only ever see the target through ψ̄_T.

/// δ̂_T,k = n⁻¹ Σ ω(Xᵢ; γ̂) rᵢ, the density-ratio weighted AIPW residual.
double SourceAugmentation(const SiteData& data, const NuisanceFits& fits,
                          const DensityRatioFit& dr, const Basis& basis);

/// Sensitivity of δ̂_T,k to ψ̄_T through the refitted γ̂:
/// d̂ = (n⁻¹ Σ ωᵢ ψᵢ ψᵢᵀ)⁻¹ (n⁻¹ Σ ωᵢ rᵢ ψᵢ).
/// Throws ValidationError when the weighted Gram matrix is singular.
Eigen::VectorXd SourceDHat(const SiteData& data, const NuisanceFits& fits,
                           const DensityRatioFit& dr, const Basis& basis);

/// Estimate of Var(δ̂_T,k | target data). The bootstrap path refits γ̂, α̂ and
/// β̂ on every resample with ψ̄_T held fixed.
double SourceSigma2(const SiteData& data, const NuisanceFits& fits,
                    const DensityRatioFit& dr,
                    const Eigen::VectorXd& psi_bar_target, const Basis& basis,
                    const VarianceOptions& options = {});

/// Step two for a source site. Failures of the density-ratio fit or of the
/// Gram inverse produce a summary with usable == false instead of throwing.
SourceSummary SummarizeSource(const SiteData& data,
                              const Eigen::VectorXd& psi_bar_target,
                              const Basis& basis,
                              const VarianceOptions& options = {});

}  // namespace face
