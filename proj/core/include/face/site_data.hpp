#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace face {

enum class SiteRole { kTarget, kSource };
enum class OutcomeFamily { kBinary, kContinuous };

const char* ToString(SiteRole role);
SiteRole ParseSiteRole(const std::string& text);

/// One site's raw records. Validated on construction and immutable afterwards;
/// instances never leave the site that owns them.
class SiteData {
 public:
  /// Throws ValidationError when a row is non-finite, a treatment value is not
  /// 0/1, the shapes disagree, or only one treatment arm is present.
  SiteData(std::string site_id, Eigen::VectorXd y, Eigen::VectorXd a,
           Eigen::MatrixXd x, SiteRole role);

  const std::string& site_id() const { return site_id_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::MatrixXd& x() const { return x_; }
  SiteRole role() const { return role_; }
  OutcomeFamily family() const { return family_; }

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index p() const { return x_.cols(); }
  Eigen::Index treated_count() const;

  /// Rows selected by `rows`, same id and role. The subset must still hold
  /// both arms.
  SiteData Subset(const std::vector<Eigen::Index>& rows) const;

 private:
  std::string site_id_;
  Eigen::VectorXd y_;
  Eigen::VectorXd a_;
  Eigen::MatrixXd x_;
  SiteRole role_;
  OutcomeFamily family_;
};

/// Covariate expansion used by the density-ratio model. Only the identity
/// expansion psi(x) = (1, x) is provided.
struct Basis {
  enum class Expansion { kIdentity };

  Expansion expansion = Expansion::kIdentity;
  Eigen::Index p = 0;

  Eigen::Index q() const { return p + 1; }
};

Eigen::VectorXd Psi(const Eigen::Ref<const Eigen::VectorXd>& x_row,
                    const Basis& basis);

/// Row-wise psi for a covariate matrix: n x q.
Eigen::MatrixXd PsiMatrix(const Eigen::MatrixXd& x, const Basis& basis);

/// Intercept-augmented design [1, X] used by the nuisance regressions.
Eigen::MatrixXd Design(const Eigen::MatrixXd& x);

/// Reads `y,a,x1..xp` with a header row. ParseError on malformed cells,
/// ValidationError on invariant violations.
SiteData LoadSiteCsv(const std::filesystem::path& path, SiteRole role,
                     std::string site_id = {});

void WriteSiteCsv(const std::filesystem::path& path, const SiteData& data);

}  // namespace face
