#pragma once

#include <random>
#include <string>

#include "face/aggregate.hpp"
#include "oracles.hpp"

namespace problems {

/// Random aggregation problem with `targets` target sites, `sources` source
/// sites and q-dimensional ψ. Variances are scaled like those of estimators
/// from a few hundred observations.
inline face::AggregationProblem Random(std::mt19937_64& rng, int targets, int sources,
                                       int q, double lambda) {
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> size(100, 300);
  face::AggregationProblem p;
  p.lambda = lambda;
  const double m = z(rng);
  for (int t = 0; t < targets; ++t) {
    const int n = size(rng);
    Eigen::MatrixXd l = Eigen::MatrixXd::NullaryExpr(q + 2, q + 2, [&] { return z(rng); });
    Eigen::MatrixXd sigma = l * l.transpose() / (q + 2.0) / n;
    sigma = (0.5 * (sigma + sigma.transpose())).eval();
    Eigen::VectorXd psi(q);
    psi[0] = 1.0;
    for (int j = 1; j < q; ++j) psi[j] = 0.1 * z(rng);
    p.targets.push_back(face::MakeTargetSummary("t" + std::to_string(t), n,
                                                m + 0.05 * z(rng), 0.3 * z(rng), psi, sigma));
  }
  for (int k = 0; k < sources; ++k) {
    face::SourceSummary s;
    s.site_id = "s" + std::to_string(k);
    s.n_k = size(rng);
    s.delta_hat = 0.5 * z(rng);
    s.sigma2_hat = std::abs(z(rng)) / s.n_k + 1e-4;
    s.d_hat = Eigen::VectorXd::NullaryExpr(q, [&] { return 0.5 * z(rng); });
    p.sources.push_back(s);
  }
  return p;
}

struct OracleBlocks {
  std::vector<oracle::TargetBlock> targets;
  std::vector<oracle::SourceBlock> sources;
  double n_total = 0.0;
};

/// Translates summaries into the oracle's per-site blocks.
inline OracleBlocks Blocks(const face::AggregationProblem& p) {
  OracleBlocks b;
  double n_target = 0.0, delta_tt = 0.0, m_tt = 0.0;
  for (const auto& s : p.targets) {
    b.targets.push_back({static_cast<double>(s.n_k), s.sigma_hat});
    n_target += static_cast<double>(s.n_k);
  }
  for (const auto& s : p.targets) {
    delta_tt += static_cast<double>(s.n_k) / n_target * s.big_delta_hat;
    m_tt += static_cast<double>(s.n_k) / n_target * s.m_hat;
  }
  b.n_total = n_target;
  for (const auto& s : p.sources) {
    if (!s.usable) continue;
    const double gap = m_tt + s.delta_hat - delta_tt;
    b.sources.push_back({s.sigma2_hat, s.d_hat, gap * gap});
    b.n_total += static_cast<double>(s.n_k);
  }
  return b;
}

inline double OracleObjective(const face::AggregationProblem& p, const std::vector<double>& eta) {
  const OracleBlocks b = Blocks(p);
  return oracle::AggregationObjective(b.targets, b.sources, eta, p.lambda, b.n_total);
}

/// Brute-force minimizer over η ∈ [−2, 2] on a 1e−5 grid for one source.
inline double GridMinimizer(const face::AggregationProblem& p) {
  const OracleBlocks b = Blocks(p);
  std::vector<double> eta{-2.0};
  double best = oracle::AggregationObjective(b.targets, b.sources, eta, p.lambda, b.n_total);
  double arg = -2.0;
  for (long i = -200000; i <= 200000; ++i) {
    eta[0] = static_cast<double>(i) * 1e-5;
    const double f = oracle::AggregationObjective(b.targets, b.sources, eta, p.lambda, b.n_total);
    if (f < best) {
      best = f;
      arg = eta[0];
    }
  }
  return arg;
}

}  // namespace problems
