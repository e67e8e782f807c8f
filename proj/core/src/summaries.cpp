#include "face/summaries.hpp"

#include <cmath>

#include "face/error.hpp"

namespace face {

TargetSummary MakeTargetSummary(std::string site_id, long long n_k,
                                double m_hat, double delta_hat,
                                Eigen::VectorXd psi_bar,
                                Eigen::MatrixXd sigma_hat) {
  TargetSummary s;
  s.site_id = std::move(site_id);
  s.n_k = n_k;
  s.m_hat = m_hat;
  s.delta_hat = delta_hat;
  s.big_delta_hat = m_hat + delta_hat;
  s.psi_bar = std::move(psi_bar);
  s.sigma_hat = std::move(sigma_hat);
  return s;
}

void Validate(const TargetSummary& s) {
  const std::string who = "target summary '" + s.site_id + "': ";
  if (s.n_k < 1) throw ValidationError(who + "n_k must be positive");
  if (!std::isfinite(s.m_hat) || !std::isfinite(s.delta_hat) ||
      !std::isfinite(s.big_delta_hat)) {
    throw ValidationError(who + "non-finite component");
  }
  if (std::abs(s.big_delta_hat - (s.m_hat + s.delta_hat)) > 1e-12) {
    throw ValidationError(who + "big_delta_hat != m_hat + delta_hat");
  }
  if (s.psi_bar.size() < 1 || s.psi_bar[0] != 1.0) {
    throw ValidationError(who + "psi_bar must start with the intercept 1");
  }
  const Eigen::Index dim = s.psi_bar.size() + 2;
  if (s.sigma_hat.rows() != dim || s.sigma_hat.cols() != dim) {
    throw ValidationError(who + "sigma_hat must be (q+2)x(q+2)");
  }
  if (!s.sigma_hat.allFinite()) throw ValidationError(who + "non-finite sigma_hat");
  const double scale = std::max(1.0, s.sigma_hat.cwiseAbs().maxCoeff());
  if ((s.sigma_hat - s.sigma_hat.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * scale) {
    throw ValidationError(who + "sigma_hat is not symmetric");
  }
}

void Validate(const SourceSummary& s) {
  const std::string who = "source summary '" + s.site_id + "': ";
  if (s.n_k < 1) throw ValidationError(who + "n_k must be positive");
  if (!s.usable) return;
  if (!std::isfinite(s.delta_hat)) throw ValidationError(who + "non-finite delta_hat");
  if (!(s.sigma2_hat >= 0.0) || !std::isfinite(s.sigma2_hat)) {
    throw ValidationError(who + "sigma2_hat must be finite and >= 0");
  }
  if (s.d_hat.size() < 1 || !s.d_hat.allFinite()) {
    throw ValidationError(who + "d_hat must be a finite q-vector");
  }
}

TargetSummary CombineTargets(const std::vector<TargetSummary>& targets) {
  if (targets.empty()) throw ValidationError("no target summaries to combine");
  if (targets.size() == 1) return targets.front();

  const Eigen::Index q = targets.front().q();
  long long total = 0;
  for (const auto& t : targets) {
    if (t.q() != q) throw ValidationError("target summaries disagree on q");
    total += t.n_k;
  }
  double m = 0.0, delta = 0.0;
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(q + 2, q + 2);
  long long truncations = 0;
  for (const auto& t : targets) {
    const double w = static_cast<double>(t.n_k) / static_cast<double>(total);
    m += w * t.m_hat;
    delta += w * t.delta_hat;
    psi += w * t.psi_bar;
    sigma += w * w * t.sigma_hat;
    truncations += t.propensity_truncations;
  }
  psi[0] = 1.0;
  std::string id;
  for (const auto& t : targets) id += (id.empty() ? "" : "+") + t.site_id;
  TargetSummary out = MakeTargetSummary(std::move(id), total, m, delta,
                                        std::move(psi), std::move(sigma));
  out.propensity_truncations = truncations;
  return out;
}

}  // namespace face
