#include "face/aipw.hpp"

#include <algorithm>

namespace face {

AipwRows ComputeAipwRows(const SiteData& data, const NuisanceFits& fits) {
  AipwRows rows;
  rows.design = Design(data.x());
  const Eigen::Index n = data.n();

  const Eigen::VectorXd eta = rows.design * fits.propensity.coef;
  rows.propensity.resize(n);
  rows.propensity_slope.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = Expit(eta[i]);
    if (pi < kPropensityFloor || pi > 1.0 - kPropensityFloor) {
      rows.propensity[i] =
          std::clamp(pi, kPropensityFloor, 1.0 - kPropensityFloor);
      rows.propensity_slope[i] = 0.0;
      ++rows.truncations;
    } else {
      rows.propensity[i] = pi;
      rows.propensity_slope[i] = pi * (1.0 - pi);
    }
  }

  rows.mu1 = fits.treated.Mean(rows.design);
  rows.mu0 = fits.control.Mean(rows.design);
  rows.dmu1 = fits.treated.MeanDerivative(rows.design);
  rows.dmu0 = fits.control.MeanDerivative(rows.design);

  rows.residual.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = data.a()[i];
    const double y = data.y()[i];
    const double pi = rows.propensity[i];
    rows.residual[i] = a / pi * (y - rows.mu1[i]) -
                       (1.0 - a) / (1.0 - pi) * (y - rows.mu0[i]);
  }
  return rows;
}

NuisanceInfluence ComputeNuisanceInfluence(const SiteData& data,
                                           const NuisanceFits& fits,
                                           const AipwRows& rows) {
  const Eigen::MatrixXd& x = rows.design;
  const Eigen::Index n = data.n();
  const auto nd = static_cast<double>(n);
  const Eigen::VectorXd& a = data.a();
  const Eigen::VectorXd& y = data.y();

  const Eigen::VectorXd eta = x * fits.propensity.coef;
  Eigen::VectorXd pi_raw(n), w_alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pi_raw[i] = Expit(eta[i]);
    w_alpha[i] = pi_raw[i] * (1.0 - pi_raw[i]);
  }
  const Eigen::VectorXd w1 = a.cwiseProduct(rows.dmu1);
  const Eigen::VectorXd w0 = (1.0 - a.array()).matrix().cwiseProduct(rows.dmu0);

  const Eigen::MatrixXd h_alpha = x.transpose() * w_alpha.asDiagonal() * x / nd;
  const Eigen::MatrixXd h1 = x.transpose() * w1.asDiagonal() * x / nd;
  const Eigen::MatrixXd h0 = x.transpose() * w0.asDiagonal() * x / nd;

  const Eigen::VectorXd s_alpha = a - pi_raw;
  const Eigen::VectorXd s1 = a.cwiseProduct(y - rows.mu1);
  const Eigen::VectorXd s0 =
      (1.0 - a.array()).matrix().cwiseProduct(y - rows.mu0);

  NuisanceInfluence out;
  out.propensity = h_alpha.ldlt().solve(x.transpose() * s_alpha.asDiagonal());
  out.treated = h1.ldlt().solve(x.transpose() * s1.asDiagonal());
  out.control = h0.ldlt().solve(x.transpose() * s0.asDiagonal());
  return out;
}

Eigen::VectorXd AugmentationInfluence(const SiteData& data,
                                      const NuisanceFits& fits,
                                      const AipwRows& rows,
                                      const Eigen::VectorXd& weights,
                                      InfluenceForm form) {
  const Eigen::VectorXd weighted = weights.cwiseProduct(rows.residual);
  const double delta = weighted.mean();
  Eigen::VectorXd xi = weighted.array() - delta;
  if (form == InfluenceForm::kPlugIn) return xi;

  const Eigen::MatrixXd& x = rows.design;
  const auto nd = static_cast<double>(data.n());
  const Eigen::VectorXd& a = data.a();
  const Eigen::VectorXd& y = data.y();
  const Eigen::ArrayXd pi = rows.propensity.array();

  // Gradients of the weighted augmentation with respect to each parameter.
  const Eigen::VectorXd c1 =
      -(weights.array() * a.array() / pi * rows.dmu1.array()).matrix();
  const Eigen::VectorXd c0 = (weights.array() * (1.0 - a.array()) /
                              (1.0 - pi) * rows.dmu0.array())
                                 .matrix();
  const Eigen::VectorXd c_alpha =
      (weights.array() *
       (-a.array() * (y - rows.mu1).array() / pi.square() -
        (1.0 - a.array()) * (y - rows.mu0).array() / (1.0 - pi).square()) *
       rows.propensity_slope.array())
          .matrix();
  const Eigen::VectorXd g1 = x.transpose() * c1 / nd;
  const Eigen::VectorXd g0 = x.transpose() * c0 / nd;
  const Eigen::VectorXd g_alpha = x.transpose() * c_alpha / nd;

  const NuisanceInfluence inf = ComputeNuisanceInfluence(data, fits, rows);
  xi += (g1.transpose() * inf.treated).transpose();
  xi += (g0.transpose() * inf.control).transpose();
  xi += (g_alpha.transpose() * inf.propensity).transpose();
  return xi;
}

}  // namespace face
