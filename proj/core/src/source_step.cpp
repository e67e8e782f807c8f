#include "face/source_step.hpp"

#include "face/aipw.hpp"
#include "face/error.hpp"
#include "face/rng.hpp"

namespace face {

double SourceAugmentation(const SiteData& data, const NuisanceFits& fits,
                          const DensityRatioFit& dr, const Basis& basis) {
  const AipwRows rows = ComputeAipwRows(data, fits);
  const Eigen::VectorXd w =
      DensityRatioWeights(PsiMatrix(data.x(), basis), dr.gamma);
  return w.cwiseProduct(rows.residual).mean();
}

namespace {

Eigen::VectorXd DHatFromRows(const Eigen::MatrixXd& psi,
                             const Eigen::VectorXd& w,
                             const Eigen::VectorXd& residual) {
  const auto nd = static_cast<double>(psi.rows());
  const Eigen::MatrixXd gram = psi.transpose() * w.asDiagonal() * psi / nd;
  const Eigen::VectorXd cross =
      psi.transpose() * w.cwiseProduct(residual) / nd;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("d_hat: weighted Gram matrix is singular");
  }
  Eigen::VectorXd d = llt.solve(cross);
  if (!d.allFinite()) {
    throw ValidationError("d_hat: weighted Gram matrix is singular");
  }
  return d;
}

}  // namespace

Eigen::VectorXd SourceDHat(const SiteData& data, const NuisanceFits& fits,
                           const DensityRatioFit& dr, const Basis& basis) {
  const AipwRows rows = ComputeAipwRows(data, fits);
  const Eigen::MatrixXd psi = PsiMatrix(data.x(), basis);
  return DHatFromRows(psi, DensityRatioWeights(psi, dr.gamma), rows.residual);
}

double SourceSigma2(const SiteData& data, const NuisanceFits& fits,
                    const DensityRatioFit& dr,
                    const Eigen::VectorXd& psi_bar_target, const Basis& basis,
                    const VarianceOptions& options) {
  const auto nd = static_cast<double>(data.n());
  if (options.method == VarianceMethod::kInfluence) {
    const AipwRows rows = ComputeAipwRows(data, fits);
    const Eigen::MatrixXd psi = PsiMatrix(data.x(), basis);
    const Eigen::VectorXd w = DensityRatioWeights(psi, dr.gamma);
    Eigen::VectorXd xi = AugmentationInfluence(data, fits, rows, w, options.form);
    if (options.form == InfluenceForm::kNuisanceCorrected) {
      const Eigen::VectorXd d = DHatFromRows(psi, w, rows.residual);
      const Eigen::MatrixXd moment =
          (w.asDiagonal() * psi).rowwise() - psi_bar_target.transpose();
      xi -= moment * d;
    }
    return xi.squaredNorm() / (nd * nd);
  }

  if (options.bootstrap_replicates < kMinBootstrapReplicates) {
    throw ValidationError("bootstrap needs at least 50 replicates, got " +
                          std::to_string(options.bootstrap_replicates));
  }
  const int b = options.bootstrap_replicates;
  Eigen::VectorXd draws(b);
  int filled = 0;
  std::uint64_t attempt = 0;
  const std::uint64_t max_attempts = 20ULL * static_cast<std::uint64_t>(b);
  while (filled < b) {
    if (attempt >= max_attempts) {
      throw ConvergenceError("source bootstrap: too many failed resamples at '" +
                             data.site_id() + "'");
    }
    Rng rng = MakeStream(options.seed, "source-bootstrap/" + data.site_id(),
                         attempt++);
    try {
      const SiteData resample = data.Subset(ResampleIndices(data.n(), rng));
      const NuisanceFits f = FitNuisances(resample, options.fit);
      if (!f.converged()) continue;
      const DensityRatioFit g = FitDensityRatio(
          PsiMatrix(resample.x(), basis), psi_bar_target, options.fit);
      if (!g.converged) continue;
      draws[filled++] = SourceAugmentation(resample, f, g, basis);
    } catch (const ValidationError&) {
    }
  }
  const double mean = draws.mean();
  return (draws.array() - mean).square().sum() / (b - 1.0);
}

SourceSummary SummarizeSource(const SiteData& data,
                              const Eigen::VectorXd& psi_bar_target,
                              const Basis& basis,
                              const VarianceOptions& options) {
  SourceSummary s;
  s.site_id = data.site_id();
  s.n_k = data.n();
  s.d_hat = Eigen::VectorXd::Zero(basis.q());

  auto unusable = [&](std::string why) {
    s.usable = false;
    s.note = std::move(why);
    s.delta_hat = 0.0;
    s.sigma2_hat = 0.0;
    s.d_hat.setZero();
    return s;
  };

  NuisanceFits fits;
  try {
    fits = FitNuisances(data, options.fit);
  } catch (const ValidationError& e) {
    return unusable(e.what());
  }
  if (!fits.converged()) return unusable("nuisance model did not converge");

  const DensityRatioFit dr =
      FitDensityRatio(PsiMatrix(data.x(), basis), psi_bar_target, options.fit);
  if (!dr.converged) {
    return unusable("density ratio did not converge (moment residual " +
                    std::to_string(dr.moment_residual_norm) + ")");
  }
  try {
    s.d_hat = SourceDHat(data, fits, dr, basis);
    s.sigma2_hat =
        SourceSigma2(data, fits, dr, psi_bar_target, basis, options);
  } catch (const ValidationError& e) {
    return unusable(e.what());
  } catch (const ConvergenceError& e) {
    return unusable(e.what());
  }
  const AipwRows rows = ComputeAipwRows(data, fits);
  s.delta_hat = DensityRatioWeights(PsiMatrix(data.x(), basis), dr.gamma)
                    .cwiseProduct(rows.residual)
                    .mean();
  s.propensity_truncations = rows.truncations;
  return s;
}

}  // namespace face
