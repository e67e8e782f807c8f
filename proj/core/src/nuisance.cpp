#include "face/nuisance.hpp"

#include <cmath>
#include <numeric>

#include "face/error.hpp"

namespace face {
namespace {

// Linear predictors beyond this magnitude mean fitted probabilities are
// numerically 0 or 1: treated as separation.
constexpr double kSeparationLinkBound = 35.0;
constexpr int kMaxHalvings = 60;

double Softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

std::vector<Eigen::Index> AllRows(Eigen::Index n) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

Eigen::MatrixXd Rows(const Eigen::MatrixXd& m,
                     std::span<const Eigen::Index> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  }
  return out;
}

Eigen::VectorXd Rows(const Eigen::VectorXd& v,
                     std::span<const Eigen::Index> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  }
  return out;
}

void RequireFullRank(const Eigen::MatrixXd& design, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    throw ValidationError(std::string(what) + ": design is rank deficient (rank " +
                          std::to_string(qr.rank()) + " < " +
                          std::to_string(design.cols()) + ")");
  }
}

double LogisticLoss(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                    const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = x * coef;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    sum += Softplus(eta[i]) - y[i] * eta[i];
  }
  return sum / static_cast<double>(eta.size());
}

double TiltObjective(const Eigen::MatrixXd& psi, const Eigen::VectorXd& target,
                     const Eigen::VectorXd& gamma) {
  return (psi * gamma).array().exp().mean() - gamma.dot(target);
}

}  // namespace

double Expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

LogisticFit FitLogistic(const Eigen::VectorXd& y_all,
                        const Eigen::MatrixXd& design_all,
                        std::span<const Eigen::Index> subset,
                        const FitOptions& options) {
  std::vector<Eigen::Index> all;
  if (subset.empty()) {
    all = AllRows(design_all.rows());
    subset = all;
  }
  const Eigen::MatrixXd x = Rows(design_all, subset);
  const Eigen::VectorXd y = Rows(y_all, subset);
  const auto n = static_cast<double>(x.rows());
  const double positives = y.sum();
  if (positives <= 0.0 || positives >= n) {
    throw ValidationError("logistic fit: both classes must be present");
  }
  RequireFullRank(x, "logistic fit");

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(x.cols());
  double loss = LogisticLoss(y, x, fit.coef);
  fit.loss_trace.push_back(loss);

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd eta = x * fit.coef;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob[i] = Expit(eta[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd grad = x.transpose() * (prob - y) / n;
    fit.score_norm = grad.cwiseAbs().maxCoeff();
    fit.iterations = iter;
    const double max_link = eta.cwiseAbs().maxCoeff();
    if (max_link > kSeparationLinkBound) break;
    if (fit.score_norm <= 1e-2 * options.tolerance) break;
    if (iter >= options.max_iterations) break;

    const Eigen::MatrixXd hess =
        x.transpose() * w.asDiagonal() * x / n;
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = fit.coef + t * step;
      const double trial_loss = LogisticLoss(y, x, trial);
      if (std::isfinite(trial_loss) && trial_loss <= loss) {
        fit.coef = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    fit.loss_trace.push_back(loss);
  }

  const double max_link = (x * fit.coef).cwiseAbs().maxCoeff();
  fit.converged =
      fit.score_norm <= options.tolerance && max_link <= kSeparationLinkBound;
  return fit;
}

LinearFit FitLinear(const Eigen::VectorXd& y_all,
                    const Eigen::MatrixXd& design_all,
                    std::span<const Eigen::Index> subset) {
  std::vector<Eigen::Index> all;
  if (subset.empty()) {
    all = AllRows(design_all.rows());
    subset = all;
  }
  const Eigen::MatrixXd x = Rows(design_all, subset);
  const Eigen::VectorXd y = Rows(y_all, subset);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw ValidationError("linear fit: design is rank deficient (rank " +
                          std::to_string(qr.rank()) + " < " +
                          std::to_string(x.cols()) + ")");
  }
  LinearFit fit;
  fit.coef = qr.solve(y);
  // One step of iterative refinement on the normal equations.
  Eigen::VectorXd resid = y - x * fit.coef;
  fit.coef += qr.solve(resid);
  resid = y - x * fit.coef;
  const Eigen::Index dof = x.rows() - x.cols();
  fit.residual_variance =
      dof > 0 ? resid.squaredNorm() / static_cast<double>(dof) : 0.0;
  return fit;
}

DensityRatioFit FitDensityRatio(const Eigen::MatrixXd& psi,
                                const Eigen::VectorXd& psi_bar_target,
                                const FitOptions& options) {
  if (psi.cols() != psi_bar_target.size()) {
    throw ValidationError("density ratio: psi and target summary disagree on q");
  }
  if (psi.rows() < 1) throw ValidationError("density ratio: empty site");
  const auto n = static_cast<double>(psi.rows());

  DensityRatioFit fit;
  fit.gamma = Eigen::VectorXd::Zero(psi.cols());
  double objective = TiltObjective(psi, psi_bar_target, fit.gamma);

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd w = (psi * fit.gamma).array().exp().matrix();
    const Eigen::VectorXd grad = psi.transpose() * w / n - psi_bar_target;
    fit.moment_residual_norm = grad.cwiseAbs().maxCoeff();
    fit.iterations = iter;
    if (fit.moment_residual_norm <= 1e-2 * options.tolerance) break;
    if (iter >= options.max_iterations) break;

    const Eigen::MatrixXd hess = psi.transpose() * w.asDiagonal() * psi / n;
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = fit.gamma + t * step;
      const double value = TiltObjective(psi, psi_bar_target, trial);
      if (std::isfinite(value) && value <= objective) {
        fit.gamma = trial;
        objective = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  fit.converged = fit.gamma.allFinite() &&
                  fit.moment_residual_norm <= options.tolerance;
  return fit;
}

Eigen::VectorXd DensityRatioWeights(const Eigen::MatrixXd& psi,
                                    const Eigen::VectorXd& gamma) {
  return (psi * gamma).array().exp().matrix();
}

Eigen::VectorXd OutcomeModel::Mean(const Eigen::MatrixXd& design) const {
  Eigen::VectorXd eta = design * coef;
  if (family == OutcomeFamily::kBinary) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = Expit(eta[i]);
  }
  return eta;
}

Eigen::VectorXd OutcomeModel::MeanDerivative(
    const Eigen::MatrixXd& design) const {
  if (family == OutcomeFamily::kContinuous) {
    return Eigen::VectorXd::Ones(design.rows());
  }
  Eigen::VectorXd mu = Mean(design);
  return mu.array() * (1.0 - mu.array());
}

NuisanceFits FitNuisances(const SiteData& data, const FitOptions& options) {
  const Eigen::MatrixXd design = Design(data.x());
  std::vector<Eigen::Index> treated, control;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    (data.a()[i] == 1.0 ? treated : control).push_back(i);
  }

  NuisanceFits fits;
  fits.propensity = FitLogistic(data.a(), design, {}, options);

  auto fit_arm = [&](const std::vector<Eigen::Index>& rows) {
    OutcomeModel model;
    model.family = data.family();
    if (data.family() == OutcomeFamily::kBinary) {
      const LogisticFit f = FitLogistic(data.y(), design, rows, options);
      model.coef = f.coef;
      model.converged = f.converged;
    } else {
      model.coef = FitLinear(data.y(), design, rows).coef;
      model.converged = true;
    }
    return model;
  };
  fits.treated = fit_arm(treated);
  fits.control = fit_arm(control);
  return fits;
}

}  // namespace face
