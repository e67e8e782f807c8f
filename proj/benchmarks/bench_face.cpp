#include <benchmark/benchmark.h>

#include <random>

#include "face/aggregate.hpp"
#include "face/nuisance.hpp"
#include "face/pipeline.hpp"
#include "face/simulate.hpp"
#include "face/source_step.hpp"
#include "face/target_step.hpp"

namespace {

face::Replicate Sites(int k) {
  face::SimConfig c;
  c.k = k;
  return face::GenerateReplicate(c, 0);
}

const face::Basis kBasis{face::Basis::Expansion::kIdentity, 10};

void BM_FitLogistic(benchmark::State& state) {
  const auto rep = Sites(2);
  const auto& s = rep.sites[0];
  const Eigen::MatrixXd design = face::Design(s.x());
  for (auto _ : state) benchmark::DoNotOptimize(face::FitLogistic(s.a(), design));
}
BENCHMARK(BM_FitLogistic);

void BM_FitDensityRatio(benchmark::State& state) {
  const auto rep = Sites(2);
  const Eigen::VectorXd target = face::PsiMatrix(rep.sites[0].x(), kBasis).colwise().mean();
  const Eigen::MatrixXd psi = face::PsiMatrix(rep.sites[1].x(), kBasis);
  for (auto _ : state) benchmark::DoNotOptimize(face::FitDensityRatio(psi, target));
}
BENCHMARK(BM_FitDensityRatio);

void BM_SummarizeTarget(benchmark::State& state) {
  const auto rep = Sites(2);
  for (auto _ : state) benchmark::DoNotOptimize(face::SummarizeTarget(rep.sites[0], kBasis));
}
BENCHMARK(BM_SummarizeTarget);

void BM_SummarizeSource(benchmark::State& state) {
  const auto rep = Sites(2);
  const auto t = face::SummarizeTarget(rep.sites[0], kBasis);
  for (auto _ : state) {
    benchmark::DoNotOptimize(face::SummarizeSource(rep.sites[1], t.psi_bar, kBasis));
  }
}
BENCHMARK(BM_SummarizeSource);

void BM_SolveEta(benchmark::State& state) {
  const auto rep = Sites(static_cast<int>(state.range(0)));
  face::SiteOptions site;
  site.cross_validation_folds = false;
  std::vector<face::TargetReport> t{face::RunTargetSite(rep.sites[0], site)};
  const auto b = face::MakeBroadcast(t);
  face::AggregationProblem p;
  p.targets.push_back(t[0].full);
  for (std::size_t k = 1; k < rep.sites.size(); ++k) {
    p.sources.push_back(face::RunSourceSite(rep.sites[k], b, site).full);
  }
  p.lambda = 10.0;
  for (auto _ : state) benchmark::DoNotOptimize(face::SolveEta(p));
}
BENCHMARK(BM_SolveEta)->Arg(10)->Arg(20)->Arg(50);

void BM_Replication(benchmark::State& state) {
  face::SimConfig c;
  c.k = static_cast<int>(state.range(0));
  std::uint64_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(face::RunReplication(c, index++));
}
BENCHMARK(BM_Replication)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
