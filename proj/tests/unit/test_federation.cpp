#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "face/error.hpp"
#include "face/federation.hpp"
#include "face/simulate.hpp"
#include "fixtures.hpp"

namespace {

face::Replicate FiveSites(std::uint64_t index = 0) {
  face::SimConfig config;
  config.k = 5;
  return face::GenerateReplicate(config, index);
}

std::vector<std::filesystem::path> WriteSites(const std::vector<face::SiteData>& sites,
                                              const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& s : sites) {
    dirs.push_back(root / s.site_id());
    face::WriteSiteDir(dirs.back(), s);
  }
  return dirs;
}

face::Json Tampered(const face::Envelope& e) {
  face::Json j = face::ToJson(e);
  j["payload"]["n_k"] = j["payload"]["n_k"].get<long long>() + 1;
  return j;
}

}  // namespace

TEST_CASE("a single target broadcasts its own covariate mean") {
  const auto t = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kTarget, 150, 1);
  face::MemoryTransport transport;
  face::SiteOptions options;
  const auto b = face::RunTargetPhase({t}, options, transport);
  const face::Basis basis{face::Basis::Expansion::kIdentity, t.p()};
  const Eigen::VectorXd mean = face::PsiMatrix(t.x(), basis).colwise().mean();
  CHECK((b.psi_bar - mean).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(b.n_target == 150);
  const auto read = face::BroadcastFromEnvelope(transport.ReadBroadcast());
  CHECK(read.psi_bar == b.psi_bar);
}

TEST_CASE("several targets broadcast the size-weighted mean") {
  auto a = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kTarget, 100, 2);
  auto c = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kTarget, 300, 3);
  a = face::SiteData("t1", a.y(), a.a(), a.x(), face::SiteRole::kTarget);
  c = face::SiteData("t2", c.y(), c.a(), c.x(), face::SiteRole::kTarget);
  face::MemoryTransport transport;
  const auto b = face::RunTargetPhase({a, c}, face::SiteOptions{}, transport);
  const face::Basis basis{face::Basis::Expansion::kIdentity, a.p()};
  Eigen::MatrixXd all(400, a.p());
  all << a.x(), c.x();
  const Eigen::VectorXd pooled = face::PsiMatrix(all, basis).colwise().mean();
  CHECK((b.psi_bar - pooled).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(b.n_target == 400);
  CHECK(b.target_sites == std::vector<std::string>{"t1", "t2"});
}

TEST_CASE("envelopes reject tampering and mismatches") {
  const auto t = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kTarget, 120, 4);
  const auto report = face::RunTargetSite(t, face::SiteOptions{});
  const auto e = face::Seal(t.site_id(), face::Phase::kTargetSummary, face::ToJson(report));
  CHECK_NOTHROW(face::OpenEnvelope(face::ToJson(e)));

  CHECK_THROWS_AS(face::OpenEnvelope(Tampered(e)), face::ParseError);

  face::Json version = face::ToJson(e);
  version["protocol_version"] = "face/2";
  CHECK_THROWS_AS(face::OpenEnvelope(version), face::ParseError);

  face::Json phase = face::ToJson(e);
  phase["phase"] = face::ToString(face::Phase::kSourceSummary);
  CHECK_THROWS_AS(face::OpenEnvelope(phase), face::ParseError);

  face::Json sender = face::ToJson(e);
  sender["sender_site"] = "someone-else";
  CHECK_THROWS_AS(face::OpenEnvelope(sender), face::ParseError);
}

TEST_CASE("a tampered summary on disk aborts aggregation") {
  const auto rep = FiveSites();
  const auto root = fixtures::ScratchDir("tamper");
  const auto dirs = WriteSites(rep.sites, root / "sites");
  face::DirectoryTransport transport(root / "run");
  CHECK_NOTHROW(face::RunFederated(dirs, face::SiteOptions{}, face::LeadingOptions{}, transport));

  const auto path = root / "run" / ("site_" + rep.sites[1].site_id() + ".summary.json");
  face::Json j = face::Json::parse(face::ReadFile(path));
  j["payload"]["delta_hat"] = 0.0;
  face::WriteFileAtomic(path, j.dump(2));
  CHECK_THROWS_AS(face::RunLeadingPhase(transport, face::LeadingOptions{}), face::ParseError);
}

TEST_CASE("federated and in-process runs give identical bytes") {
  const auto rep = FiveSites(3);
  const auto root = fixtures::ScratchDir("identical");
  const auto dirs = WriteSites(rep.sites, root / "sites");
  face::DirectoryTransport transport(root / "run");
  const auto federated =
      face::RunFederated(dirs, face::SiteOptions{}, face::LeadingOptions{}, transport);
  const auto local = face::RunInProcess(rep.sites, face::SiteOptions{}, face::LeadingOptions{});
  CHECK(face::ResultBytes(federated) == face::ResultBytes(local));

  face::MemoryTransport memory;
  std::vector<std::filesystem::path> reversed(dirs.rbegin(), dirs.rend());
  const auto shuffled =
      face::RunFederated(reversed, face::SiteOptions{}, face::LeadingOptions{}, memory);
  CHECK(face::ResultBytes(shuffled) == face::ResultBytes(local));
}

TEST_CASE("a missing source summary drops that site") {
  const auto rep = FiveSites(4);
  const auto root = fixtures::ScratchDir("missing");
  const auto dirs = WriteSites(rep.sites, root / "sites");
  face::DirectoryTransport transport(root / "run");
  face::RunFederated(dirs, face::SiteOptions{}, face::LeadingOptions{}, transport);
  const std::string dropped = rep.sites[2].site_id();
  std::filesystem::remove(root / "run" / ("site_" + dropped + ".summary.json"));
  const auto run = face::RunLeadingPhase(transport, face::LeadingOptions{});
  CHECK(run.result.source_ids.size() == rep.sites.size() - 2);
  for (const auto& id : run.result.source_ids) CHECK(id != dropped);
}

TEST_CASE("nothing row-level leaves a site") {
  const auto rep = FiveSites(5);
  const auto root = fixtures::ScratchDir("privacy");
  const auto dirs = WriteSites(rep.sites, root / "sites");
  face::MemoryTransport memory;
  face::CountingTransport counting(memory);
  face::DirectoryTransport disk(root / "run");
  face::RunFederated(dirs, face::SiteOptions{}, face::LeadingOptions{}, disk);
  face::RunFederated(dirs, face::SiteOptions{}, face::LeadingOptions{}, counting);

  CHECK(counting.broadcasts() == 1);
  CHECK(counting.broadcast_reads() == 1);
  REQUIRE(counting.emissions().size() == rep.sites.size());
  for (const auto& [site, count] : counting.emissions()) CHECK(count == 1);

  std::string bytes;
  for (const auto& entry : std::filesystem::directory_iterator(root / "run")) {
    bytes += face::ReadFile(entry.path());
  }
  int leaked = 0;
  for (const auto& s : rep.sites) {
    for (Eigen::Index i = 0; i < s.n(); ++i) {
      leaked += bytes.find(face::Json(s.y()[i]).dump()) != std::string::npos;
      for (Eigen::Index j = 0; j < s.p(); ++j) {
        leaked += bytes.find(face::Json(s.x()(i, j)).dump()) != std::string::npos;
      }
    }
  }
  CHECK(leaked == 0);
}

TEST_CASE("site directories are validated") {
  const auto root = fixtures::ScratchDir("dirs");
  CHECK_THROWS_AS(face::LoadSiteDir(root / "nope"), face::ValidationError);

  const auto t = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kTarget, 100, 6);
  face::WriteSiteDir(root / "a", t);
  const auto back = face::LoadSiteDir(root / "a");
  CHECK(back.site_id() == t.site_id());
  CHECK(back.role() == face::SiteRole::kTarget);
  CHECK(back.y() == t.y());

  face::MemoryTransport transport;
  CHECK_THROWS_AS(face::RunTargetPhase({t, t}, face::SiteOptions{}, transport),
                  face::ValidationError);
  const auto s = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kSource, 100, 6);
  CHECK_THROWS_AS(face::RunTargetPhase({s}, face::SiteOptions{}, transport),
                  face::ValidationError);
}

TEST_CASE("the directory transport needs a broadcast before sources run") {
  const auto root = fixtures::ScratchDir("order");
  face::DirectoryTransport transport(root / "run");
  const auto s = fixtures::DrawSite(face::Setting::kI, face::SiteRole::kSource, 100, 7);
  CHECK_THROWS(face::RunSourcePhase({s}, face::SiteOptions{}, transport));
}
