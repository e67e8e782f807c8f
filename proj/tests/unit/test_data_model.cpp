#include <doctest.h>

#include <fstream>
#include <random>

#include "face/error.hpp"
#include "face/serialization.hpp"
#include "face/site_data.hpp"
#include "face/summaries.hpp"
#include "fixtures.hpp"

using face::ParseError;
using face::SiteData;
using face::SiteRole;
using face::ValidationError;

namespace {

std::filesystem::path WriteText(const std::string& name, const std::string& text) {
  const auto dir = fixtures::ScratchDir("csv");
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

std::string ErrorText(const std::filesystem::path& path) {
  try {
    face::LoadSiteCsv(path, SiteRole::kTarget);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

face::TargetSummary RandomTarget(std::mt19937_64& rng, int q) {
  std::normal_distribution<double> z;
  Eigen::VectorXd psi(q);
  psi[0] = 1.0;
  for (int j = 1; j < q; ++j) psi[j] = z(rng);
  Eigen::MatrixXd l(q + 2, q + 2);
  for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = z(rng);
  Eigen::MatrixXd sigma = l * l.transpose() / 1e3;
  sigma = (0.5 * (sigma + sigma.transpose())).eval();
  return face::MakeTargetSummary("t" + std::to_string(rng() % 100), 50 + rng() % 500,
                                 z(rng), z(rng) / 7.0, psi, sigma);
}

}  // namespace

TEST_CASE("csv with three rows loads with its treated count") {
  const auto path = WriteText("three.csv", "y,a,x1,x2\n1.5,1,0.1,0.2\n2.0,0,0.3,0.4\n-1,1,0.5,0.6\n");
  const SiteData d = face::LoadSiteCsv(path, SiteRole::kTarget);
  CHECK(d.n() == 3);
  CHECK(d.treated_count() == 2);
  CHECK(d.p() == 2);
  CHECK(d.site_id() == "three");
  CHECK(d.x()(2, 1) == 0.6);
  CHECK(d.family() == face::OutcomeFamily::kContinuous);
}

TEST_CASE("csv with one treatment arm is rejected") {
  const auto path = WriteText("single.csv", "y,a,x1\n1,1,0.1\n2,1,0.2\n3,1,0.3\n");
  CHECK_THROWS_AS(face::LoadSiteCsv(path, SiteRole::kTarget), ValidationError);
  CHECK(ErrorText(path).find("single treatment arm") != std::string::npos);
}

TEST_CASE("malformed cell names its row and column") {
  std::string text = "y,a,x1,x2\n";
  for (int r = 1; r <= 6; ++r) {
    text += std::to_string(r) + "," + std::to_string(r % 2) + ",0.5," +
            (r == 5 ? "abc" : "1.0") + "\n";
  }
  const auto path = WriteText("bad.csv", text);
  CHECK_THROWS_AS(face::LoadSiteCsv(path, SiteRole::kTarget), ParseError);
  const std::string msg = ErrorText(path);
  CHECK(msg.find("row 5") != std::string::npos);
  CHECK(msg.find("'x2'") != std::string::npos);
}

TEST_CASE("csv rejects missing values, bad treatment codes and bad headers") {
  CHECK_THROWS_AS(face::LoadSiteCsv(WriteText("m.csv", "y,a,x1\n1,1,\n2,0,1\n"),
                                    SiteRole::kTarget),
                  ParseError);
  CHECK_THROWS_AS(face::LoadSiteCsv(WriteText("n.csv", "y,a,x1\nnan,1,0\n2,0,1\n"),
                                    SiteRole::kTarget),
                  ValidationError);
  CHECK_THROWS_AS(face::LoadSiteCsv(WriteText("t.csv", "y,a,x1\n1,2,0\n2,0,1\n"),
                                    SiteRole::kTarget),
                  ValidationError);
  CHECK_THROWS_AS(face::LoadSiteCsv(WriteText("h.csv", "y,t,x1\n1,1,0\n2,0,1\n"),
                                    SiteRole::kTarget),
                  ParseError);
  CHECK_THROWS_AS(face::LoadSiteCsv(WriteText("f.csv", "y,a,x1\n1,1\n2,0,1\n"),
                                    SiteRole::kTarget),
                  ParseError);
  CHECK_THROWS_AS(face::LoadSiteCsv("/nonexistent/file.csv", SiteRole::kTarget),
                  ParseError);
}

TEST_CASE("binary outcomes are detected") {
  const auto path = WriteText("bin.csv", "y,a,x1\n1,1,0.1\n0,0,0.2\n0,1,0.3\n");
  CHECK(face::LoadSiteCsv(path, SiteRole::kSource).family() == face::OutcomeFamily::kBinary);
}

TEST_CASE("csv write and read round-trips every value") {
  const SiteData d = fixtures::DrawSite(face::Setting::kI, SiteRole::kSource, 60, 3);
  const auto path = fixtures::ScratchDir("roundtrip") / "site.csv";
  face::WriteSiteCsv(path, d);
  const SiteData back = face::LoadSiteCsv(path, SiteRole::kSource, d.site_id());
  CHECK(back.y() == d.y());
  CHECK(back.a() == d.a());
  CHECK(back.x() == d.x());
}

TEST_CASE("psi prepends the intercept") {
  const face::Basis b2{face::Basis::Expansion::kIdentity, 2};
  CHECK(face::Psi(Eigen::Vector2d(0.0, 0.0), b2) == Eigen::Vector3d(1.0, 0.0, 0.0));
  CHECK(face::Psi(Eigen::Vector2d(0.5, -1.2), b2) == Eigen::Vector3d(1.0, 0.5, -1.2));
  const face::Basis b0{face::Basis::Expansion::kIdentity, 0};
  const Eigen::VectorXd one = face::Psi(Eigen::VectorXd(0), b0);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 1.0);
  CHECK(b2.q() == 3);
}

TEST_CASE("target summaries keep big delta equal to m plus delta") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto s = RandomTarget(rng, 1 + static_cast<int>(rng() % 6));
    CHECK(s.big_delta_hat == s.m_hat + s.delta_hat);
    CHECK_NOTHROW(face::Validate(s));
  }
}

TEST_CASE("summary validation catches broken invariants") {
  std::mt19937_64 rng(5);
  auto s = RandomTarget(rng, 3);
  auto bad = s;
  bad.big_delta_hat += 1e-9;
  CHECK_THROWS_AS(face::Validate(bad), ValidationError);
  bad = s;
  bad.psi_bar[0] = 0.5;
  CHECK_THROWS_AS(face::Validate(bad), ValidationError);
  bad = s;
  bad.sigma_hat(0, 1) += 1.0;
  CHECK_THROWS_AS(face::Validate(bad), ValidationError);
  bad = s;
  bad.sigma_hat = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(face::Validate(bad), ValidationError);

  face::SourceSummary src;
  src.site_id = "s";
  src.n_k = 10;
  src.sigma2_hat = -1.0;
  src.d_hat = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(face::Validate(src), ValidationError);
}

TEST_CASE("serialization round-trips summaries bit for bit") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  for (int i = 0; i < 100; ++i) {
    const auto t = RandomTarget(rng, 4);
    const auto back = face::TargetSummaryFromJson(face::Json::parse(face::ToJson(t).dump()));
    CHECK(back.site_id == t.site_id);
    CHECK(back.n_k == t.n_k);
    CHECK(back.m_hat == t.m_hat);
    CHECK(back.delta_hat == t.delta_hat);
    CHECK(back.big_delta_hat == t.big_delta_hat);
    CHECK(back.psi_bar == t.psi_bar);
    CHECK(back.sigma_hat == t.sigma_hat);

    face::SourceSummary s;
    s.site_id = "src";
    s.n_k = 123;
    s.delta_hat = z(rng) * 1e-3;
    s.sigma2_hat = std::abs(z(rng)) * 1e-7;
    s.d_hat = Eigen::VectorXd::NullaryExpr(4, [&] { return z(rng); });
    const auto sb = face::SourceSummaryFromJson(face::Json::parse(face::ToJson(s).dump()));
    CHECK(sb.delta_hat == s.delta_hat);
    CHECK(sb.sigma2_hat == s.sigma2_hat);
    CHECK(sb.d_hat == s.d_hat);
    CHECK(sb.usable == s.usable);
  }
}

TEST_CASE("summary parsing reports missing fields") {
  std::mt19937_64 rng(1);
  face::Json j = face::ToJson(RandomTarget(rng, 2));
  j.erase("sigma_hat");
  CHECK_THROWS_AS(face::TargetSummaryFromJson(j), ParseError);
}

TEST_CASE("combining target sites weights by sample size") {
  std::mt19937_64 rng(3);
  auto a = RandomTarget(rng, 3);
  auto b = RandomTarget(rng, 3);
  a.n_k = 100;
  b.n_k = 300;
  const auto c = face::CombineTargets({a, b});
  CHECK(c.n_k == 400);
  CHECK(c.m_hat == doctest::Approx(0.25 * a.m_hat + 0.75 * b.m_hat).epsilon(1e-14));
  CHECK((c.psi_bar - (0.25 * a.psi_bar + 0.75 * b.psi_bar)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((c.sigma_hat - (0.0625 * a.sigma_hat + 0.5625 * b.sigma_hat)).cwiseAbs().maxCoeff() <
        1e-14);
  CHECK(c.big_delta_hat == c.m_hat + c.delta_hat);
}
