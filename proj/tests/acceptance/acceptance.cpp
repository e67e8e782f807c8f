// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "face/aggregate.hpp"
#include "face/federation.hpp"
#include "face/nuisance.hpp"
#include "face/pipeline.hpp"
#include "face/simulate.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "problems.hpp"

namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void Report(int id, Verdict& v) {
  std::printf("CRITERION %d: %s %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.str().c_str());
  std::fflush(stdout);
  failures += !v.pass;
}

face::SimReport Study(face::Setting setting, int k, int reps) {
  face::SimConfig c;
  c.setting = setting;
  c.k = k;
  c.replications = reps;
  c.seed = 20240601;
  const auto start = std::chrono::steady_clock::now();
  auto report = face::RunStudy(c);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("  study %s K=%d reps=%d (%.0f s): Target bias %.3f RMSE %.3f cov %.1f | "
              "SS bias %.3f RMSE %.3f cov %.1f | FACE bias %.3f RMSE %.3f cov %.1f | "
              "failures %d\n",
              face::ToString(setting).c_str(), k, reps, seconds, report.target.bias,
              report.target.rmse, report.target.coverage, report.ss.bias, report.ss.rmse,
              report.ss.coverage, report.face.bias, report.face.rmse, report.face.coverage,
              report.failures);
  std::fflush(stdout);
  return report;
}

/// ∞-norm of mean(exp(ψγ)ψ) − ψ̄, summed row by row.
double MomentResidual(const Eigen::MatrixXd& psi, const Eigen::VectorXd& gamma,
                      const Eigen::VectorXd& target) {
  std::vector<double> m(static_cast<std::size_t>(psi.cols()), 0.0);
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    double lin = 0.0;
    for (Eigen::Index j = 0; j < psi.cols(); ++j) lin += psi(i, j) * gamma[j];
    const double w = std::exp(lin);
    for (Eigen::Index j = 0; j < psi.cols(); ++j) m[static_cast<std::size_t>(j)] += w * psi(i, j);
  }
  double worst = 0.0;
  for (Eigen::Index j = 0; j < psi.cols(); ++j) {
    const double r = m[static_cast<std::size_t>(j)] / static_cast<double>(psi.rows()) - target[j];
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

/// KKT violation measured with central differences of the oracle objective.
double OracleKkt(const face::AggregationProblem& p, const Eigen::VectorXd& eta) {
  const auto blocks = problems::Blocks(p);
  std::vector<double> e(eta.data(), eta.data() + eta.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double h = 1e-3;
    auto at = [&](double v) {
      auto shifted = e;
      shifted[k] = v;
      return oracle::AggregationObjective(blocks.targets, blocks.sources, shifted, 0.0,
                                          blocks.n_total);
    };
    const double g = (at(e[k] + h) - at(e[k] - h)) / (2.0 * h);
    const double bound = p.lambda * blocks.sources[k].penalty;
    const double violation = e[k] == 0.0 ? std::max(0.0, std::abs(g) - bound)
                                         : std::abs(g + (e[k] > 0 ? bound : -bound));
    worst = std::max(worst, violation);
  }
  return worst;
}

double MeanErrorInSe(const face::SimReport& r, double* mean_out) {
  double s = 0.0, ss = 0.0;
  int n = 0;
  for (const auto& rec : r.records) {
    if (!rec.ok) continue;
    const double e = rec.face - rec.true_tate;
    s += e;
    ss += e * e;
    ++n;
  }
  const double mean = s / n;
  const double se = std::sqrt((ss - n * mean * mean) / (n - 1) / n);
  *mean_out = mean;
  return std::abs(mean) / se;
}

std::vector<face::SiteData> FixtureSites() {
  std::vector<face::SiteData> sites;
  for (const char* id : {"target", "source01", "source02", "source03", "source04"}) {
    sites.push_back(face::LoadSiteDir(fs::path(FACE_FIXTURES_DIR) / "sites" / id));
  }
  return sites;
}

std::vector<fs::path> FixtureDirs() {
  std::vector<fs::path> dirs;
  for (const char* id : {"target", "source01", "source02", "source03", "source04"}) {
    dirs.push_back(fs::path(FACE_FIXTURES_DIR) / "sites" / id);
  }
  return dirs;
}

}  // namespace

int main() {
  using face::Setting;
  const auto start = std::chrono::steady_clock::now();

  // Simulation studies shared by criteria 1, 2, 3, 6 and 9.
  const auto s1 = Study(Setting::kI, 10, 1000);
  const double s1_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto s2 = Study(Setting::kII, 10, 500);
  const auto s3 = Study(Setting::kIII, 10, 500);
  const auto s4 = Study(Setting::kIV, 10, 500);
  std::vector<face::SimReport> k20;
  for (auto s : {Setting::kI, Setting::kII, Setting::kIII, Setting::kIV}) {
    k20.push_back(Study(s, 20, 500));
  }

  {
    Verdict v;
    v.detail << "Setting I K=10 1000 reps: FACE bias " << s1.face.bias << ", RMSE "
             << s1.face.rmse << ", coverage " << s1.face.coverage << "%; Target RMSE "
             << s1.target.rmse << "; " << s1_seconds << " s";
    v.Require(std::abs(s1.face.bias) <= 0.15, "|FACE bias| <= 0.15");
    v.Require(s1.face.rmse >= 0.35 && s1.face.rmse <= 0.75, "FACE RMSE in [0.35, 0.75]");
    v.Require(s1.face.coverage >= 94.0, "FACE coverage >= 94%");
    v.Require(s1.target.rmse >= 1.3 && s1.target.rmse <= 2.1, "Target RMSE in [1.3, 2.1]");
    Report(1, v);
  }
  {
    Verdict v;
    const std::vector<const face::SimReport*> all = {&s1, &s2, &s3, &s4,
                                                     &k20[0], &k20[1], &k20[2], &k20[3]};
    for (const auto* r : all) {
      const std::string tag =
          face::ToString(r->config.setting) + " K=" + std::to_string(r->config.k);
      v.Require(r->face.rmse < r->target.rmse, tag + " FACE RMSE < Target RMSE");
      if (r->config.setting != Setting::kII) {
        v.Require(std::abs(r->face.bias) < std::abs(r->ss.bias), tag + " |FACE bias| < |SS bias|");
      }
      v.Require(r->face.coverage >= 93.0, tag + " FACE coverage >= 93%");
    }
    v.detail << "8 configurations checked";
    Report(2, v);
  }
  {
    Verdict v;
    v.detail << "Setting IV K=10 500 reps: FACE RMSE " << s4.face.rmse << ", SS RMSE "
             << s4.ss.rmse << ", ratio " << s4.face.rmse / s4.ss.rmse;
    v.Require(s4.face.rmse <= 0.7 * s4.ss.rmse, "FACE RMSE <= 0.7 x SS RMSE");
    Report(3, v);
  }
  {
    Verdict v;
    int fits = 0, converged = 0, self_checks = 0;
    double worst = 0.0, worst_self = 0.0;
    for (auto setting : {Setting::kI, Setting::kII, Setting::kIII, Setting::kIV}) {
      face::SimConfig c;
      c.setting = setting;
      for (std::uint64_t r = 0; r < 50; ++r) {
        const auto rep = face::GenerateReplicate(c, r);
        const face::Basis basis{face::Basis::Expansion::kIdentity, c.p};
        const Eigen::VectorXd target = face::PsiMatrix(rep.sites[0].x(), basis).colwise().mean();
        for (const auto& site : rep.sites) {
          const Eigen::MatrixXd psi = face::PsiMatrix(site.x(), basis);
          if (site.role() == face::SiteRole::kSource) {
            const auto fit = face::FitDensityRatio(psi, target);
            ++fits;
            if (fit.converged) {
              ++converged;
              worst = std::max(worst, MomentResidual(psi, fit.gamma, target));
            }
          }
          const auto self = face::FitDensityRatio(psi, psi.colwise().mean().transpose());
          worst_self = std::max(worst_self, self.gamma.cwiseAbs().maxCoeff());
          ++self_checks;
        }
      }
    }
    v.detail << converged << "/" << fits << " source fits converged, worst residual " << worst
             << "; " << self_checks << " self-weighting fits, worst |gamma| " << worst_self;
    v.Require(worst <= 1e-8, "moment residual <= 1e-8");
    v.Require(worst_self <= 1e-8, "self-weighting gamma = 0 +- 1e-8");
    Report(4, v);
  }
  {
    Verdict v;
    std::mt19937_64 rng(99);
    double worst_grid = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      face::AggregationProblem p;
      for (;;) {
        p = problems::Random(rng, 1, 1, 3, trial % 3 == 0 ? 0.0 : 10.0 * trial);
        const auto quad = face::BuildQuadratic(p);
        if (std::abs(quad.b[0] / quad.a(0, 0)) < 1.9) break;
      }
      const auto r = face::SolveEta(p);
      worst_grid = std::max(worst_grid, std::abs(r.eta[0] - problems::GridMinimizer(p)));
    }
    double worst_kkt = 0.0;
    int problems_checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = problems::Random(rng, 1, 9, 4, trial * 0.5);
      worst_kkt = std::max(worst_kkt, OracleKkt(p, face::SolveEta(p).eta));
      ++problems_checked;
    }
    face::SimConfig c;
    for (std::uint64_t r = 0; r < 50; ++r) {
      const auto rep = face::GenerateReplicate(c, r);
      face::SiteOptions site;
      site.cross_validation_folds = false;
      std::vector<face::TargetReport> t{face::RunTargetSite(rep.sites[0], site)};
      const auto b = face::MakeBroadcast(t);
      face::AggregationProblem p;
      p.targets.push_back(t[0].full);
      for (std::size_t k = 1; k < rep.sites.size(); ++k) {
        p.sources.push_back(face::RunSourceSite(rep.sites[k], b, site).full);
      }
      for (double lambda : {0.0, 1.0, 10.0, 100.0}) {
        p.lambda = lambda;
        auto usable = p;
        std::erase_if(usable.sources, [](const face::SourceSummary& s) { return !s.usable; });
        worst_kkt = std::max(worst_kkt, OracleKkt(usable, face::SolveEta(usable).eta));
        ++problems_checked;
      }
    }
    v.detail << "100 K=2 problems, worst |eta - grid| " << worst_grid << "; "
             << problems_checked << " K=10 problems, worst KKT " << worst_kkt;
    v.Require(worst_grid <= 1e-4, "grid agreement within 1e-4");
    v.Require(worst_kkt <= 1e-6, "KKT residual <= 1e-6");
    Report(5, v);
  }
  {
    Verdict v;
    const double empirical = s1.face.empirical_variance.value_or(0.0);
    const double ratio = s1.face.mean_variance_estimate / empirical;
    v.detail << "mean V/N " << s1.face.mean_variance_estimate << ", empirical variance "
             << empirical << ", ratio " << ratio;
    v.Require(std::abs(ratio - 1.0) <= 0.15, "within 15%");
    Report(6, v);
  }
  {
    Verdict v;
    const auto run_dir = fixtures::ScratchDir("acceptance-federated");
    face::DirectoryTransport transport(run_dir);
    const auto federated = face::RunFederated(FixtureDirs(), face::SiteOptions{},
                                              face::LeadingOptions{}, transport);
    const auto local =
        face::RunInProcess(FixtureSites(), face::SiteOptions{}, face::LeadingOptions{});
    const auto a = face::ResultBytes(federated);
    const auto b = face::ResultBytes(local);
    v.detail << "5-site fixture, " << a.size() << " result bytes";
    v.Require(a == b, "byte-identical results");
    Report(7, v);
  }
  {
    Verdict v;
    const auto run_dir = fixtures::ScratchDir("acceptance-privacy");
    face::DirectoryTransport disk(run_dir);
    face::CountingTransport counting(disk);
    face::RunFederated(FixtureDirs(), face::SiteOptions{}, face::LeadingOptions{}, counting);
    const auto sites = FixtureSites();
    bool one_each = counting.emissions().size() == sites.size();
    for (const auto& [id, n] : counting.emissions()) one_each = one_each && n == 1;
    std::string bytes;
    for (const auto& entry : fs::directory_iterator(run_dir)) bytes += face::ReadFile(entry.path());
    int leaked = 0, scanned = 0;
    for (const auto& s : sites) {
      for (Eigen::Index i = 0; i < s.n(); ++i) {
        leaked += bytes.find(face::Json(s.y()[i]).dump()) != std::string::npos;
        ++scanned;
        for (Eigen::Index j = 0; j < s.p(); ++j) {
          leaked += bytes.find(face::Json(s.x()(i, j)).dump()) != std::string::npos;
          ++scanned;
        }
      }
    }
    v.detail << counting.broadcasts() << " broadcast, " << counting.emissions().size()
             << " sites emitting; " << scanned << " row values scanned in " << bytes.size()
             << " bytes, " << leaked << " found";
    v.Require(counting.broadcasts() == 1, "one broadcast");
    v.Require(one_each, "one emission per site");
    v.Require(leaked == 0, "no row values in summaries");
    Report(8, v);
  }
  {
    Verdict v;
    double m2 = 0.0, m3 = 0.0;
    const double z2 = MeanErrorInSe(s2, &m2);
    const double z3 = MeanErrorInSe(s3, &m3);
    v.detail << "Setting II mean error " << m2 << " (" << z2 << " SE); Setting III mean error "
             << m3 << " (" << z3 << " SE)";
    v.Require(z2 <= 3.0, "Setting II within 3 SE");
    v.Require(z3 <= 3.0, "Setting III within 3 SE");
    Report(9, v);
  }

  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 9 criteria failed (%.0f s)\n", failures, total);
  return failures == 0 ? 0 : 1;
}
