#include "face/target_step.hpp"

#include "face/error.hpp"
#include "face/rng.hpp"

namespace face {

TargetComponents ComputeTargetComponents(const SiteData& data,
                                         const NuisanceFits& fits,
                                         const Basis& basis) {
  const AipwRows rows = ComputeAipwRows(data, fits);
  TargetComponents out;
  out.m_hat = (rows.mu1 - rows.mu0).mean();
  out.delta_hat = rows.residual.mean();
  out.psi_bar = PsiMatrix(data.x(), basis).colwise().mean().transpose();
  out.truncations = rows.truncations;
  return out;
}

InfluenceRows TargetInfluence(const SiteData& data, const NuisanceFits& fits,
                              const Basis& basis, InfluenceForm form) {
  const AipwRows rows = ComputeAipwRows(data, fits);
  const Eigen::Index n = data.n();

  InfluenceRows out;
  const Eigen::VectorXd plug = rows.mu1 - rows.mu0;
  out.zeta = plug.array() - plug.mean();
  if (form == InfluenceForm::kNuisanceCorrected) {
    const auto nd = static_cast<double>(n);
    const Eigen::VectorXd g1 = rows.design.transpose() * rows.dmu1 / nd;
    const Eigen::VectorXd g0 = rows.design.transpose() * rows.dmu0 / nd;
    const NuisanceInfluence inf = ComputeNuisanceInfluence(data, fits, rows);
    out.zeta += (g1.transpose() * inf.treated).transpose();
    out.zeta -= (g0.transpose() * inf.control).transpose();
  }
  out.xi = AugmentationInfluence(data, fits, rows, Eigen::VectorXd::Ones(n),
                                 form);
  out.psi_rows = PsiMatrix(data.x(), basis);
  return out;
}

namespace {

Eigen::MatrixXd InfluenceSigma(const SiteData& data, const NuisanceFits& fits,
                               const Basis& basis, InfluenceForm form) {
  const InfluenceRows inf = TargetInfluence(data, fits, basis, form);
  const Eigen::Index n = data.n();
  const Eigen::Index q = basis.q();
  Eigen::MatrixXd u(n, q + 2);
  u.col(0) = inf.zeta;
  u.col(1) = inf.xi;
  const Eigen::RowVectorXd psi_bar = inf.psi_rows.colwise().mean();
  u.rightCols(q) = inf.psi_rows.rowwise() - psi_bar;
  const auto nd = static_cast<double>(n);
  Eigen::MatrixXd sigma = u.transpose() * u / (nd * nd);
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd BootstrapSigma(const SiteData& data, const Basis& basis,
                               const VarianceOptions& options) {
  const int b = options.bootstrap_replicates;
  const Eigen::Index q = basis.q();
  Eigen::MatrixXd draws(b, q + 2);
  int filled = 0;
  std::uint64_t attempt = 0;
  const std::uint64_t max_attempts = 20ULL * static_cast<std::uint64_t>(b);
  while (filled < b) {
    if (attempt >= max_attempts) {
      throw ConvergenceError("target bootstrap: too many failed resamples at '" +
                             data.site_id() + "'");
    }
    Rng rng = MakeStream(options.seed, "target-bootstrap/" + data.site_id(),
                         attempt++);
    try {
      const SiteData resample = data.Subset(ResampleIndices(data.n(), rng));
      const NuisanceFits fits = FitNuisances(resample, options.fit);
      if (!fits.converged()) continue;
      const TargetComponents c = ComputeTargetComponents(resample, fits, basis);
      draws(filled, 0) = c.m_hat;
      draws(filled, 1) = c.delta_hat;
      draws.row(filled).tail(q) = c.psi_bar.transpose();
      ++filled;
    } catch (const ValidationError&) {
      // Resample lost an arm or became rank deficient; draw again.
    }
  }
  const Eigen::MatrixXd centered = draws.rowwise() - draws.colwise().mean();
  Eigen::MatrixXd sigma = centered.transpose() * centered / (b - 1.0);
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace

Eigen::MatrixXd TargetSigma(const SiteData& data, const NuisanceFits& fits,
                            const Basis& basis,
                            const VarianceOptions& options) {
  if (options.method == VarianceMethod::kBootstrap) {
    if (options.bootstrap_replicates < kMinBootstrapReplicates) {
      throw ValidationError("bootstrap needs at least 50 replicates, got " +
                            std::to_string(options.bootstrap_replicates));
    }
    return BootstrapSigma(data, basis, options);
  }
  return InfluenceSigma(data, fits, basis, options.form);
}

TargetSummary SummarizeTarget(const SiteData& data, const NuisanceFits& fits,
                              const Basis& basis,
                              const VarianceOptions& options) {
  const TargetComponents c = ComputeTargetComponents(data, fits, basis);
  TargetSummary s =
      MakeTargetSummary(data.site_id(), data.n(), c.m_hat, c.delta_hat,
                        c.psi_bar, TargetSigma(data, fits, basis, options));
  s.propensity_truncations = c.truncations;
  return s;
}

TargetSummary SummarizeTarget(const SiteData& data, const Basis& basis,
                              const VarianceOptions& options) {
  const NuisanceFits fits = FitNuisances(data, options.fit);
  if (!fits.converged()) {
    throw ConvergenceError("target site '" + data.site_id() +
                           "': nuisance model did not converge");
  }
  return SummarizeTarget(data, fits, basis, options);
}

}  // namespace face
