#include "face/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "face/error.hpp"
#include "face/rng.hpp"
#include "face/source_step.hpp"

namespace face {

FoldSplit SplitRows(const SiteData& data, std::uint64_t seed) {
  const Eigen::Index n = data.n();
  if (n < 4) throw ValidationError("site '" + data.site_id() + "' too small to split");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = MakeStream(seed, "split/" + data.site_id(), attempt);
    std::shuffle(order.begin(), order.end(), rng);
    FoldSplit split;
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    split.train.assign(order.begin(), order.begin() + half);
    split.validation.assign(order.begin() + half, order.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    auto both_arms = [&](const std::vector<Eigen::Index>& rows) {
      Eigen::Index treated = 0;
      for (auto r : rows) treated += data.a()[r] == 1.0;
      return treated > 0 && treated < static_cast<Eigen::Index>(rows.size());
    };
    if (both_arms(split.train) && both_arms(split.validation)) return split;
  }
  throw ValidationError("site '" + data.site_id() +
                        "': cannot split with both arms in each half");
}

TargetReport RunTargetSite(const SiteData& data, const SiteOptions& options) {
  const Basis basis{Basis::Expansion::kIdentity, data.p()};
  TargetReport report;
  report.full = SummarizeTarget(data, basis, options.variance);
  if (options.cross_validation_folds) {
    try {
      const FoldSplit split = SplitRows(data, options.split_seed);
      report.train =
          SummarizeTarget(data.Subset(split.train), basis, options.variance);
      report.validation = SummarizeTarget(data.Subset(split.validation), basis,
                                          options.variance);
    } catch (const std::runtime_error&) {
      report.train.reset();
      report.validation.reset();
    }
  }
  return report;
}

Broadcast MakeBroadcast(const std::vector<TargetReport>& targets) {
  if (targets.empty()) throw ValidationError("no target sites");
  std::set<std::string> ids;
  Broadcast b;
  std::vector<TargetSummary> full, train, validation;
  bool folds = true;
  for (const auto& t : targets) {
    if (!ids.insert(t.full.site_id).second) {
      throw ValidationError("duplicate site_id '" + t.full.site_id + "'");
    }
    b.target_sites.push_back(t.full.site_id);
    full.push_back(t.full);
    if (t.train && t.validation) {
      train.push_back(*t.train);
      validation.push_back(*t.validation);
    } else {
      folds = false;
    }
  }
  const TargetSummary combined = CombineTargets(full);
  b.psi_bar = combined.psi_bar;
  b.n_target = combined.n_k;
  if (folds) {
    b.psi_bar_train = CombineTargets(train).psi_bar;
    b.psi_bar_validation = CombineTargets(validation).psi_bar;
  }
  return b;
}

SourceReport RunSourceSite(const SiteData& data, const Broadcast& broadcast,
                           const SiteOptions& options) {
  const Basis basis{Basis::Expansion::kIdentity, data.p()};
  if (broadcast.psi_bar.size() != basis.q()) {
    throw ValidationError("broadcast psi_bar has length " +
                          std::to_string(broadcast.psi_bar.size()) +
                          " but site '" + data.site_id() + "' has q = " +
                          std::to_string(basis.q()));
  }
  SourceReport report;
  report.full = SummarizeSource(data, broadcast.psi_bar, basis, options.variance);
  if (options.cross_validation_folds && broadcast.psi_bar_train &&
      broadcast.psi_bar_validation) {
    try {
      const FoldSplit split = SplitRows(data, options.split_seed);
      report.train = SummarizeSource(data.Subset(split.train),
                                     *broadcast.psi_bar_train, basis,
                                     options.variance);
      report.validation = SummarizeSource(data.Subset(split.validation),
                                          *broadcast.psi_bar_validation, basis,
                                          options.variance);
    } catch (const ValidationError&) {
      report.train.reset();
      report.validation.reset();
    }
  }
  return report;
}

FaceRun RunLeading(std::vector<TargetReport> targets,
                   std::vector<SourceReport> sources,
                   const LeadingOptions& options) {
  if (targets.empty()) throw ValidationError("no target summaries");
  auto by_target_id = [](const TargetReport& l, const TargetReport& r) {
    return l.full.site_id < r.full.site_id;
  };
  auto by_source_id = [](const SourceReport& l, const SourceReport& r) {
    return l.full.site_id < r.full.site_id;
  };
  std::sort(targets.begin(), targets.end(), by_target_id);
  std::sort(sources.begin(), sources.end(), by_source_id);
  std::set<std::string> ids;
  for (const auto& t : targets) {
    if (!ids.insert(t.full.site_id).second) {
      throw ValidationError("duplicate site_id '" + t.full.site_id + "'");
    }
  }
  for (const auto& s : sources) {
    if (!ids.insert(s.full.site_id).second) {
      throw ValidationError("duplicate site_id '" + s.full.site_id + "'");
    }
  }

  FaceRun run;
  AggregationProblem full;
  for (const auto& t : targets) full.targets.push_back(t.full);
  for (const auto& s : sources) {
    full.sources.push_back(s.full);
    if (!s.full.usable) run.excluded_sites.push_back(s.full.site_id);
  }

  switch (options.lambda.mode) {
    case LambdaConfig::Mode::kFixed:
      full.lambda = options.lambda.value;
      break;
    case LambdaConfig::Mode::kDefault: {
      long long n = 0;
      for (const auto& t : full.targets) n += t.n_k;
      for (const auto& s : full.sources) n += s.usable ? s.n_k : 0;
      full.lambda = DefaultLambda(n);
      break;
    }
    case LambdaConfig::Mode::kCrossValidate: {
      AggregationProblem train, validation;
      for (const auto& t : targets) {
        if (!t.train || !t.validation) {
          throw ValidationError("cross-validation needs fold summaries from target '" +
                                t.full.site_id + "'");
        }
        train.targets.push_back(*t.train);
        validation.targets.push_back(*t.validation);
      }
      for (const auto& s : sources) {
        if (!s.full.usable) continue;
        if (!s.train || !s.validation) {
          throw ValidationError("cross-validation needs fold summaries from source '" +
                                s.full.site_id + "'");
        }
        train.sources.push_back(*s.train);
        validation.sources.push_back(*s.validation);
      }
      run.selection = SelectLambda(train, validation, options.lambda.grid,
                                   options.solver);
      full.lambda = run.selection->lambda;
      break;
    }
  }
  run.result = SolveEta(full, options.solver, options.alpha);
  return run;
}

FaceRun RunInProcess(const std::vector<SiteData>& sites,
                     const SiteOptions& site_options,
                     const LeadingOptions& leading_options) {
  std::vector<TargetReport> targets;
  for (const auto& s : sites) {
    if (s.role() == SiteRole::kTarget) targets.push_back(RunTargetSite(s, site_options));
  }
  const Broadcast broadcast = MakeBroadcast(targets);
  std::vector<SourceReport> sources;
  for (const auto& s : sites) {
    if (s.role() == SiteRole::kSource) {
      sources.push_back(RunSourceSite(s, broadcast, site_options));
    }
  }
  return RunLeading(std::move(targets), std::move(sources), leading_options);
}

}  // namespace face
