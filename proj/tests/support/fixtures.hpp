#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "face/simulate.hpp"
#include "face/site_data.hpp"

namespace fixtures {

/// One site drawn from a simulation setting with the given size. The target
/// follows the target design, a source the design of source site `index`.
inline face::SiteData DrawSite(face::Setting setting, face::SiteRole role, int n,
                               std::uint64_t seed, int index = 1) {
  face::SimConfig config;
  config.setting = setting;
  config.k = std::max(index + 1, 2);
  config.n_target = n;
  config.n_source_min = n;
  config.n_source_max = n;
  face::Rng rng = face::MakeStream(seed, "fixture-site", static_cast<std::uint64_t>(index));
  auto designs = face::DrawDesigns(config, rng);
  const face::SiteDesign& d =
      designs[role == face::SiteRole::kTarget ? 0 : static_cast<std::size_t>(index)];
  const auto coef = face::MakeOutcomeCoefficients(designs[0].kappa);
  const Eigen::MatrixXd x = face::GenerateCovariates(d, rng);
  const auto o = face::GenerateOutcomesAndTreatment(x, d, coef, rng);
  return face::SiteData(d.site_id, o.y, o.a, x, role);
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path ScratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("face-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
