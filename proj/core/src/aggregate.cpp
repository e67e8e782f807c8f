#include "face/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "face/error.hpp"

namespace face {
namespace {

// Symmetrizes and clips negative eigenvalues. Returns true if clipping was
// needed beyond round-off.
bool FloorToPsd(Eigen::MatrixXd& m) {
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest >= 0.0) return false;
  const double scale = std::max(1e-300, eig.eigenvalues().cwiseAbs().maxCoeff());
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  m = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose());
  return smallest < -1e-10 * scale;
}

double SoftThreshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double Sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

AggregationQuadratic BuildQuadratic(const AggregationProblem& problem) {
  if (problem.targets.empty()) {
    throw ValidationError("aggregation needs at least one target summary");
  }
  if (!(problem.lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  AggregationQuadratic quad;
  std::vector<TargetSummary> floored = problem.targets;
  for (auto& t : floored) {
    Validate(t);
    if (FloorToPsd(t.sigma_hat)) {
      quad.warnings.push_back("sigma_hat of '" + t.site_id +
                              "' was not PSD; negative eigenvalues clipped");
    }
  }
  quad.target = CombineTargets(floored);
  const Eigen::Index q = quad.target.q();
  quad.n_total = quad.target.n_k;
  for (const auto& s : problem.sources) {
    if (!s.usable) continue;
    Validate(s);
    if (s.d_hat.size() != q) {
      throw ValidationError("source '" + s.site_id + "': d_hat length " +
                            std::to_string(s.d_hat.size()) + " != q " +
                            std::to_string(q));
    }
    quad.sources.push_back(&s);
    quad.n_total += s.n_k;
  }

  const auto k = static_cast<Eigen::Index>(quad.sources.size());
  const auto n = static_cast<double>(quad.n_total);
  const Eigen::MatrixXd& sigma = quad.target.sigma_hat;
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(q + 2);
  u0[0] = 1.0;
  u0[1] = 1.0;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q + 2, k);
  Eigen::VectorXd s2(k);
  quad.penalty_weights.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const SourceSummary& s = *quad.sources[static_cast<std::size_t>(j)];
    g(1, j) = -1.0;
    g.col(j).tail(q) = s.d_hat;
    s2[j] = s.sigma2_hat;
    const double gap = s.delta_hat - quad.target.delta_hat;
    quad.penalty_weights[j] = gap * gap;
  }
  quad.a = n * (Eigen::MatrixXd(s2.asDiagonal()) + g.transpose() * sigma * g);
  quad.a = 0.5 * (quad.a + quad.a.transpose());
  quad.b = n * g.transpose() * sigma * u0;
  quad.c = n * u0.dot(sigma * u0);
  return quad;
}

double AggregationQuadratic::Smooth(const Eigen::VectorXd& eta) const {
  return eta.dot(a * eta) + 2.0 * b.dot(eta) + c;
}

double AggregationQuadratic::Objective(const Eigen::VectorXd& eta,
                                       double lambda) const {
  return Smooth(eta) + lambda * penalty_weights.dot(eta.cwiseAbs());
}

Eigen::VectorXd AggregationQuadratic::SmoothGradient(
    const Eigen::VectorXd& eta) const {
  return 2.0 * (a * eta + b);
}

double Objective(const AggregationProblem& problem,
                 const Eigen::VectorXd& eta) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  if (eta.size() != quad.size()) throw ValidationError("eta has wrong length");
  return quad.Objective(eta, problem.lambda);
}

double KktResidual(const AggregationQuadratic& quad, const Eigen::VectorXd& eta,
                   double lambda) {
  const Eigen::VectorXd grad = quad.SmoothGradient(eta);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const double t = lambda * quad.penalty_weights[j];
    const double r = eta[j] != 0.0 ? std::abs(grad[j] + t * Sign(eta[j]))
                                   : std::max(0.0, std::abs(grad[j]) - t);
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

// Exact solve on the current support with fixed signs, followed by a few
// rounds of iterative refinement. A step is kept only when it preserves every
// sign, does not raise the objective beyond rounding and lowers the KKT residual.
void PolishOnSupport(const AggregationQuadratic& quad, double lambda,
                     Eigen::VectorXd& eta) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    if (eta[j] != 0.0) support.push_back(j);
  }
  if (support.empty()) return;
  const auto m = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) {
      a(r, c) = quad.a(support[static_cast<std::size_t>(r)],
                       support[static_cast<std::size_t>(c)]);
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) return;

  double objective = quad.Objective(eta, lambda);
  double kkt = KktResidual(quad, eta, lambda);
  for (int round = 0; round < 4 && kkt > 0.0; ++round) {
    // Half the gradient of the objective restricted to the support.
    Eigen::VectorXd residual(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const Eigen::Index j = support[static_cast<std::size_t>(r)];
      residual[r] = quad.a.row(j).dot(eta) + quad.b[j] +
                    0.5 * lambda * quad.penalty_weights[j] * Sign(eta[j]);
    }
    const Eigen::VectorXd step = ldlt.solve(-residual);
    if (!step.allFinite()) return;
    Eigen::VectorXd candidate = eta;
    for (Eigen::Index r = 0; r < m; ++r) {
      const Eigen::Index j = support[static_cast<std::size_t>(r)];
      candidate[j] += step[r];
      if (Sign(candidate[j]) != Sign(eta[j])) return;
    }
    const double next_objective = quad.Objective(candidate, lambda);
    const double next_kkt = KktResidual(quad, candidate, lambda);
    // The objective may move by a few ulps at the restricted minimum.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(objective);
    if (next_objective > objective + slack || next_kkt >= kkt) return;
    eta = candidate;
    objective = next_objective;
    kkt = next_kkt;
  }
}

AggregationResult Finish(const AggregationProblem& problem,
                         const AggregationQuadratic& quad,
                         const Eigen::VectorXd& eta, double alpha) {
  AggregationResult r;
  for (const SourceSummary* s : quad.sources) {
    r.source_ids.push_back(s->site_id);
    r.source_n.push_back(s->n_k);
  }
  r.eta = eta;
  r.alpha = alpha;
  r.lambda_used = problem.lambda;
  r.n_total = quad.n_total;
  r.delta_target = quad.target.big_delta_hat;
  r.delta_face = quad.target.big_delta_hat;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const SourceSummary& s = *quad.sources[static_cast<std::size_t>(j)];
    const double site_estimate = quad.target.m_hat + s.delta_hat;
    r.delta_face += eta[j] * (site_estimate - quad.target.big_delta_hat);
    if (eta[j] != 0.0) r.selected.push_back(s.site_id);
  }
  // V̂ = N Σ η²σ̂² + N hᵀΣ̂h is exactly the smooth part of the objective.
  r.v_hat = std::max(0.0, quad.Smooth(eta));
  r.ci = FaceCi(r.delta_face, r.v_hat, r.n_total, alpha);
  r.warnings = quad.warnings;
  return r;
}

}  // namespace

AggregationResult SolveEta(const AggregationProblem& problem,
                           const SolverOptions& options, double alpha) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  const Eigen::Index k = quad.size();
  const double lambda = problem.lambda;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  std::vector<double> trace{quad.Objective(eta, lambda)};
  std::vector<std::string> warnings;

  int sweeps = 0;
  bool converged = k == 0;
  while (!converged && sweeps < options.max_sweeps) {
    ++sweeps;
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double ajj = quad.a(j, j);
      const double z = quad.b[j] + quad.a.row(j).dot(eta) - ajj * eta[j];
      const double threshold = 0.5 * lambda * quad.penalty_weights[j];
      double next = 0.0;
      if (ajj > 0.0) {
        next = -SoftThreshold(z, threshold) / ajj;
      } else if (std::abs(z) > threshold) {
        warnings.push_back("coordinate " + quad.sources[j]->site_id +
                           " has zero curvature; held at 0");
      }
      max_change = std::max(max_change, std::abs(next - eta[j]));
      eta[j] = next;
    }
    trace.push_back(quad.Objective(eta, lambda));
    if (max_change <= options.tolerance) converged = true;
  }
  PolishOnSupport(quad, lambda, eta);
  trace.push_back(quad.Objective(eta, lambda));

  AggregationResult r = Finish(problem, quad, eta, alpha);
  r.objective_trace = std::move(trace);
  r.sweeps = sweeps;
  r.converged = converged;
  r.kkt_residual = KktResidual(quad, eta, lambda);
  if (r.kkt_residual > options.kkt_tolerance) {
    r.warnings.push_back("KKT residual " + std::to_string(r.kkt_residual) +
                         " above tolerance");
  }
  r.warnings.insert(r.warnings.end(), warnings.begin(), warnings.end());
  return r;
}

AggregationResult EvaluateWeights(const AggregationProblem& problem,
                                  const Eigen::VectorXd& eta, double alpha) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  if (eta.size() != quad.size()) throw ValidationError("eta has wrong length");
  AggregationResult r = Finish(problem, quad, eta, alpha);
  r.objective_trace = {quad.Objective(eta, problem.lambda)};
  r.kkt_residual = std::numeric_limits<double>::quiet_NaN();
  return r;
}

double FaceEstimate(const AggregationProblem& problem,
                    const Eigen::VectorXd& eta) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  if (eta.size() != quad.size()) throw ValidationError("eta has wrong length");
  const double anchor = quad.target.big_delta_hat;
  double out = (1.0 - eta.sum()) * anchor;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    out += eta[j] * (quad.target.m_hat + quad.sources[j]->delta_hat);
  }
  return out;
}

double FaceEstimateAugmented(const AggregationProblem& problem,
                             const Eigen::VectorXd& eta) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  if (eta.size() != quad.size()) throw ValidationError("eta has wrong length");
  double out = quad.target.m_hat + (1.0 - eta.sum()) * quad.target.delta_hat;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    out += eta[j] * quad.sources[j]->delta_hat;
  }
  return out;
}

double FaceVariance(const AggregationProblem& problem,
                    const Eigen::VectorXd& eta) {
  const AggregationQuadratic quad = BuildQuadratic(problem);
  if (eta.size() != quad.size()) throw ValidationError("eta has wrong length");
  return std::max(0.0, quad.Smooth(eta));
}

double NormalQuantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

ConfidenceInterval FaceCi(double delta_face, double v_hat, long long n_total,
                          double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ValidationError("alpha must lie in (0, 1]");
  }
  if (n_total < 1) throw ValidationError("N must be positive");
  const double z = alpha >= 1.0 ? 0.0 : NormalQuantile(1.0 - alpha / 2.0);
  const double half =
      z * std::sqrt(std::max(0.0, v_hat) / static_cast<double>(n_total));
  return {delta_face - half, delta_face + half};
}

double DefaultLambda(long long n_total) {
  return std::cbrt(static_cast<double>(n_total));
}

std::vector<double> DefaultLambdaGrid() {
  return {0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0};
}

double ValidationLoss(const AggregationProblem& validation,
                      const std::vector<std::string>& ids,
                      const Eigen::VectorXd& eta_train) {
  const AggregationQuadratic quad = BuildQuadratic(validation);
  const Eigen::Index k = quad.size();
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto it = std::find(ids.begin(), ids.end(), quad.sources[j]->site_id);
    if (it != ids.end()) eta[j] = eta_train[it - ids.begin()];
  }
  const auto n = static_cast<double>(quad.n_total);
  const double variance = quad.Smooth(eta) / n;
  // Σ η_k (Δ̂_k − Δ̂_T,T) = Σ η_k (δ̂_k − δ̂_T,T); its variance is the
  // quadratic form without the anchor terms.
  double discrepancy = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    discrepancy += eta[j] * (quad.sources[j]->delta_hat - quad.target.delta_hat);
  }
  const double discrepancy_var = eta.dot(quad.a * eta) / n;
  return variance + discrepancy * discrepancy - discrepancy_var;
}

LambdaSelection SelectLambda(const AggregationProblem& train,
                             const AggregationProblem& validation,
                             const std::vector<double>& grid,
                             const SolverOptions& options) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  LambdaSelection out;
  out.grid = grid;
  out.validation_loss.reserve(grid.size());
  double best_loss = std::numeric_limits<double>::infinity();
  double best_lambda = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    if (!(lambda >= 0.0)) throw ValidationError("lambda grid has a negative value");
    AggregationProblem p = train;
    p.lambda = lambda;
    const AggregationResult fit = SolveEta(p, options);
    const double loss = ValidationLoss(validation, fit.source_ids, fit.eta);
    out.validation_loss.push_back(loss);
    if (loss < best_loss || (loss == best_loss && lambda < best_lambda)) {
      best_loss = loss;
      best_lambda = lambda;
    }
  }
  out.lambda = best_lambda;
  return out;
}

}  // namespace face
