#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace face {

/// Everything a target site shares after the first step. The augmentation
/// carries the sign for which big_delta_hat = m_hat + delta_hat.
struct TargetSummary {
  std::string site_id;
  long long n_k = 0;
  double m_hat = 0.0;
  double delta_hat = 0.0;
  double big_delta_hat = 0.0;
  Eigen::VectorXd psi_bar;
  // Covariance of (M̂, δ̂, ψ̄ᵀ)ᵀ, dimension (q+2) x (q+2).
  Eigen::MatrixXd sigma_hat;
  long long propensity_truncations = 0;

  Eigen::Index q() const { return psi_bar.size(); }
};

/// Everything a source site shares after the second step. `usable` is false
/// when the density-ratio fit or the d_hat Gram inverse failed; such a site
/// is dropped by the leading site.
struct SourceSummary {
  std::string site_id;
  long long n_k = 0;
  double delta_hat = 0.0;
  double sigma2_hat = 0.0;
  Eigen::VectorXd d_hat;
  bool usable = true;
  std::string note;
  long long propensity_truncations = 0;
};

/// Builds a TargetSummary, setting big_delta_hat from the two components.
TargetSummary MakeTargetSummary(std::string site_id, long long n_k,
                                double m_hat, double delta_hat,
                                Eigen::VectorXd psi_bar,
                                Eigen::MatrixXd sigma_hat);

/// Throws ValidationError if an invariant of the summary does not hold.
void Validate(const TargetSummary& s);
void Validate(const SourceSummary& s);

/// N_T-weighted combination of several target sites' summaries. The combined
/// sigma_hat is the block sum Σ (n_k/N_T)² Σ̂_k.
TargetSummary CombineTargets(const std::vector<TargetSummary>& targets);

}  // namespace face
