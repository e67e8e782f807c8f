// face: command-line front door for site steps, federated runs and
// simulation studies.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "face/error.hpp"
#include "face/federation.hpp"
#include "face/simulate.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConvergence = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t ResolveSeed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FACE_SEED")) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(env, &used);
      if (used == std::string(env).size()) return value;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("FACE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 7;
}

struct VarianceFlags {
  std::string method = "influence";
  int bootstrap_replicates = 200;

  face::VarianceOptions Build(std::uint64_t seed) const {
    face::VarianceOptions v;
    if (method == "influence") {
      v.method = face::VarianceMethod::kInfluence;
    } else if (method == "bootstrap") {
      v.method = face::VarianceMethod::kBootstrap;
    } else {
      throw UsageError("--variance must be influence or bootstrap");
    }
    v.bootstrap_replicates = bootstrap_replicates;
    v.seed = seed;
    return v;
  }
};

face::Envelope ReadEnvelopeFile(const fs::path& path) {
  try {
    return face::OpenEnvelope(face::Json::parse(face::ReadFile(path)));
  } catch (const face::Json::parse_error& e) {
    throw face::ParseError(path.string() + ": " + e.what());
  }
}

std::vector<double> ReadGrid(const fs::path& path) {
  const std::string text = face::ReadFile(path);
  std::vector<double> grid;
  try {
    const face::Json j = face::Json::parse(text);
    grid = j.is_object() ? j.at("grid").get<std::vector<double>>()
                         : j.get<std::vector<double>>();
  } catch (const face::Json::exception&) {
    // Plain text: numbers separated by whitespace or commas.
    std::string cleaned = text;
    for (char& c : cleaned) {
      if (c == ',') c = ' ';
    }
    std::istringstream in(cleaned);
    std::string token;
    while (in >> token) {
      try {
        std::size_t used = 0;
        grid.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw face::ParseError(path.string() + ": cannot parse grid value '" + token + "'");
      }
    }
  }
  if (grid.empty()) throw face::ValidationError(path.string() + ": empty grid");
  for (double g : grid) {
    if (!std::isfinite(g) || g < 0.0) {
      throw face::ValidationError(path.string() + ": grid values must be finite and >= 0");
    }
  }
  return grid;
}

face::LambdaConfig ParseLambda(const std::string& text,
                               const std::optional<std::string>& grid_file) {
  face::LambdaConfig cfg;
  if (grid_file) cfg.grid = ReadGrid(*grid_file);
  if (text == "cv") {
    cfg.mode = face::LambdaConfig::Mode::kCrossValidate;
  } else if (text == "default") {
    cfg.mode = face::LambdaConfig::Mode::kDefault;
  } else {
    cfg.mode = face::LambdaConfig::Mode::kFixed;
    try {
      std::size_t used = 0;
      cfg.value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw UsageError("--lambda must be a number, 'cv' or 'default'");
    }
    if (!std::isfinite(cfg.value) || cfg.value < 0.0) {
      throw UsageError("--lambda must be finite and >= 0");
    }
  }
  return cfg;
}

void PrintResult(const face::FaceRun& run, std::ostream& out) {
  const auto& r = run.result;
  out << std::setprecision(6);
  out << "Delta_FACE  " << r.delta_face << "\n";
  out << "Delta_T,T   " << r.delta_target << "\n";
  out << "V_hat       " << r.v_hat << "\n";
  out << "SE          " << std::sqrt(r.v_hat / static_cast<double>(r.n_total)) << "\n";
  out << "CI " << std::setprecision(3) << 100.0 * (1.0 - r.alpha) << "%  ["
      << std::setprecision(6) << r.ci.lower << ", " << r.ci.upper << "]\n";
  out << "lambda      " << r.lambda_used << "\n";
  out << "N           " << r.n_total << "\n";
  out << std::left << std::setw(24) << "site" << std::right << std::setw(8) << "n"
      << std::setw(14) << "eta" << "\n";
  for (std::size_t k = 0; k < r.source_ids.size(); ++k) {
    out << std::left << std::setw(24) << r.source_ids[k] << std::right << std::setw(8)
        << r.source_n[k] << std::setw(14) << r.eta[static_cast<Eigen::Index>(k)] << "\n";
  }
  for (const auto& id : run.excluded_sites) {
    out << std::left << std::setw(24) << id << "  excluded (unusable summary)\n";
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

void WriteResult(const face::FaceRun& run, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  face::WriteFileAtomic(out, face::ResultBytes(run));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated adaptive causal estimation"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  // site
  auto* site = app.add_subcommand("site", "Run the local step for one site");
  std::string site_data, site_role, site_out, site_id;
  std::optional<std::string> site_broadcast;
  VarianceFlags site_variance;
  bool site_no_folds = false;
  site->add_option("--data", site_data, "Site CSV (y,a,x1..xp)")->required();
  site->add_option("--role", site_role, "target or source")->required();
  site->add_option("--broadcast", site_broadcast, "Broadcast file (source sites)");
  site->add_option("--out", site_out, "Summary envelope to write")->required();
  site->add_option("--site-id", site_id, "Site id (default: file stem)");
  site->add_option("--variance", site_variance.method, "influence or bootstrap");
  site->add_option("--bootstrap-reps", site_variance.bootstrap_replicates);
  site->add_flag("--no-folds", site_no_folds, "Skip the cross-validation halves");
  site->add_option("--seed", seed_flag);

  // broadcast
  auto* broadcast = app.add_subcommand("broadcast", "Combine target summaries into the broadcast");
  std::string broadcast_dir;
  broadcast->add_option("--run-dir", broadcast_dir)->required();

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "Leading-site aggregation");
  std::string agg_dir, agg_lambda = "cv", agg_out;
  std::optional<std::string> agg_grid;
  double agg_alpha = 0.05;
  aggregate->add_option("--run-dir", agg_dir)->required();
  aggregate->add_option("--lambda", agg_lambda, "Number, 'cv' or 'default'");
  aggregate->add_option("--grid", agg_grid, "Lambda grid file (JSON array or text)");
  aggregate->add_option("--alpha", agg_alpha);
  aggregate->add_option("--out", agg_out, "Result file (default: <run-dir>/result.json)");
  aggregate->add_option("--seed", seed_flag);

  // federate
  auto* federate = app.add_subcommand("federate", "Run all phases over site directories");
  std::vector<std::string> fed_sites;
  std::string fed_dir, fed_lambda = "cv";
  std::optional<std::string> fed_grid;
  double fed_alpha = 0.05;
  VarianceFlags fed_variance;
  federate->add_option("--sites", fed_sites, "Site directories")->required();
  federate->add_option("--run-dir", fed_dir)->required();
  federate->add_option("--lambda", fed_lambda);
  federate->add_option("--grid", fed_grid);
  federate->add_option("--alpha", fed_alpha);
  federate->add_option("--variance", fed_variance.method);
  federate->add_option("--bootstrap-reps", fed_variance.bootstrap_replicates);
  federate->add_option("--seed", seed_flag);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulation study");
  std::string sim_setting = "I", sim_out;
  std::optional<std::string> sim_config;
  std::optional<int> sim_k, sim_reps, sim_jobs, sim_n_target;
  simulate->add_option("--setting", sim_setting, "I, II, III or IV");
  simulate->add_option("--k", sim_k, "Number of sites");
  simulate->add_option("--reps", sim_reps, "Replications");
  simulate->add_option("--jobs", sim_jobs, "Parallel replications");
  simulate->add_option("--n-target", sim_n_target, "Target-site sample size");
  simulate->add_option("--config", sim_config, "JSON config file");
  simulate->add_option("--out", sim_out, "Report directory")->required();
  simulate->add_option("--seed", seed_flag);

  // generate
  auto* generate = app.add_subcommand("generate", "Write one simulated replicate as site directories");
  std::string gen_setting = "I", gen_out;
  int gen_k = 5, gen_index = 0;
  std::optional<int> gen_n_target;
  generate->add_option("--setting", gen_setting);
  generate->add_option("--k", gen_k);
  generate->add_option("--index", gen_index, "Replication index");
  generate->add_option("--n-target", gen_n_target);
  generate->add_option("--out", gen_out)->required();
  generate->add_option("--seed", seed_flag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::uint64_t seed = ResolveSeed(seed_flag);
    face::SiteOptions site_options;
    site_options.split_seed = seed;

    if (*site) {
      site_options.variance = site_variance.Build(seed);
      site_options.cross_validation_folds = !site_no_folds;
      const face::SiteRole role = face::ParseSiteRole(site_role);
      const face::SiteData data = face::LoadSiteCsv(site_data, role, site_id);
      face::Envelope envelope;
      if (role == face::SiteRole::kTarget) {
        if (site_broadcast) throw UsageError("--broadcast is only for source sites");
        const face::TargetReport r = face::RunTargetSite(data, site_options);
        envelope = face::Seal(r.full.site_id, face::Phase::kTargetSummary, face::ToJson(r));
      } else {
        if (!site_broadcast) throw UsageError("source sites need --broadcast");
        const face::Broadcast b =
            face::BroadcastFromEnvelope(ReadEnvelopeFile(*site_broadcast));
        const face::SourceReport r = face::RunSourceSite(data, b, site_options);
        if (!r.full.usable) {
          std::cerr << "warning: site '" << r.full.site_id << "' is unusable: "
                    << r.full.note << "\n";
        }
        envelope = face::Seal(r.full.site_id, face::Phase::kSourceSummary, face::ToJson(r));
      }
      const fs::path out(site_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      face::WriteFileAtomic(out, face::ToJson(envelope).dump(2) + "\n");
      std::cout << "wrote " << out.string() << "\n";
    } else if (*broadcast) {
      face::DirectoryTransport transport(broadcast_dir);
      std::vector<face::TargetReport> targets;
      for (const auto& e : transport.ReadSummaries()) {
        if (e.phase == face::Phase::kTargetSummary) {
          targets.push_back(face::TargetFromEnvelope(e));
        }
      }
      if (targets.empty()) {
        throw face::ValidationError("no target summaries in '" + broadcast_dir + "'");
      }
      const face::Broadcast b = face::MakeBroadcast(targets);
      transport.PublishBroadcast(
          face::Seal("targets", face::Phase::kTargetBroadcast, face::ToJson(b)));
      std::cout << "wrote " << (fs::path(broadcast_dir) / "broadcast.json").string()
                << " (" << targets.size() << " target sites, N_T = " << b.n_target
                << ")\n";
    } else if (*aggregate) {
      if (!fs::is_directory(agg_dir)) {
        throw face::ValidationError("run directory '" + agg_dir + "' does not exist");
      }
      face::LeadingOptions leading;
      leading.lambda = ParseLambda(agg_lambda, agg_grid);
      leading.alpha = agg_alpha;
      face::DirectoryTransport transport(agg_dir);
      const face::FaceRun run = face::RunLeadingPhase(transport, leading);
      WriteResult(run, agg_out.empty() ? fs::path(agg_dir) / "result.json" : fs::path(agg_out));
      PrintResult(run, std::cout);
    } else if (*federate) {
      site_options.variance = fed_variance.Build(seed);
      face::LeadingOptions leading;
      leading.lambda = ParseLambda(fed_lambda, fed_grid);
      leading.alpha = fed_alpha;
      std::vector<fs::path> dirs(fed_sites.begin(), fed_sites.end());
      face::DirectoryTransport transport(fed_dir);
      const face::FaceRun run = face::RunFederated(dirs, site_options, leading, transport);
      WriteResult(run, fs::path(fed_dir) / "result.json");
      PrintResult(run, std::cout);
    } else if (*simulate) {
      face::SimConfig config;
      if (sim_config) {
        try {
          config = face::SimConfigFromJson(face::Json::parse(face::ReadFile(*sim_config)));
        } catch (const face::Json::parse_error& e) {
          throw face::ParseError(*sim_config + ": " + e.what());
        }
      }
      if (!sim_config || simulate->count("--setting")) {
        config.setting = face::ParseSetting(sim_setting);
      }
      if (sim_k) config.k = *sim_k;
      if (sim_reps) config.replications = *sim_reps;
      if (sim_jobs) config.jobs = *sim_jobs;
      if (sim_n_target) config.n_target = *sim_n_target;
      if (seed_flag || !sim_config) config.seed = seed;
      config.Validate();
      const face::SimReport report = face::RunStudy(config);
      fs::create_directories(sim_out);
      face::WriteFileAtomic(fs::path(sim_out) / "report.json",
                            face::ToJson(report).dump(2) + "\n");
      const std::string table = face::FormatTable(report);
      face::WriteFileAtomic(fs::path(sim_out) / "report.txt", table);
      std::cout << table;
    } else if (*generate) {
      face::SimConfig config;
      config.setting = face::ParseSetting(gen_setting);
      config.k = gen_k;
      config.seed = seed;
      if (gen_n_target) config.n_target = *gen_n_target;
      config.Validate();
      const face::Replicate rep =
          face::GenerateReplicate(config, static_cast<std::uint64_t>(gen_index));
      for (const auto& s : rep.sites) face::WriteSiteDir(fs::path(gen_out) / s.site_id(), s);
      std::cout << "wrote " << rep.sites.size() << " site directories to " << gen_out
                << " (true TATE " << std::setprecision(6) << rep.true_tate << ")\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const face::ConvergenceError& e) {
    std::cerr << "did not converge: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const face::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const face::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
