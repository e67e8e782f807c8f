#include "face/site_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string_view>
#include <vector>

#include "face/error.hpp"

namespace face {

const char* ToString(SiteRole role) {
  return role == SiteRole::kTarget ? "target" : "source";
}

SiteRole ParseSiteRole(const std::string& text) {
  if (text == "target") return SiteRole::kTarget;
  if (text == "source") return SiteRole::kSource;
  throw ValidationError("unknown site role '" + text +
                        "' (expected target or source)");
}

SiteData::SiteData(std::string site_id, Eigen::VectorXd y, Eigen::VectorXd a,
                   Eigen::MatrixXd x, SiteRole role)
    : site_id_(std::move(site_id)),
      y_(std::move(y)),
      a_(std::move(a)),
      x_(std::move(x)),
      role_(role),
      family_(OutcomeFamily::kContinuous) {
  const Eigen::Index n = y_.size();
  if (n < 1) throw ValidationError("site '" + site_id_ + "' has no rows");
  if (a_.size() != n || x_.rows() != n) {
    throw ValidationError("site '" + site_id_ +
                          "': y, a and x row counts disagree");
  }
  if (!y_.allFinite() || !x_.allFinite()) {
    throw ValidationError("site '" + site_id_ +
                          "': non-finite value (NaN or inf) present");
  }
  bool binary = true;
  Eigen::Index treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a_[i] != 0.0 && a_[i] != 1.0) {
      throw ValidationError("site '" + site_id_ + "': treatment in row " +
                            std::to_string(i + 1) + " is not 0/1");
    }
    treated += a_[i] == 1.0;
    if (y_[i] != 0.0 && y_[i] != 1.0) binary = false;
  }
  if (treated == 0 || treated == n) {
    throw ValidationError("site '" + site_id_ + "': single treatment arm");
  }
  family_ = binary ? OutcomeFamily::kBinary : OutcomeFamily::kContinuous;
}

Eigen::Index SiteData::treated_count() const {
  return static_cast<Eigen::Index>(a_.sum());
}

SiteData SiteData::Subset(const std::vector<Eigen::Index>& rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(m), a(m);
  Eigen::MatrixXd x(m, p());
  for (Eigen::Index r = 0; r < m; ++r) {
    y[r] = y_[rows[r]];
    a[r] = a_[rows[r]];
    x.row(r) = x_.row(rows[r]);
  }
  return SiteData(site_id_, std::move(y), std::move(a), std::move(x), role_);
}

Eigen::VectorXd Psi(const Eigen::Ref<const Eigen::VectorXd>& x_row,
                    const Basis& basis) {
  Eigen::VectorXd out(basis.q());
  out[0] = 1.0;
  out.tail(basis.p) = x_row;
  return out;
}

Eigen::MatrixXd PsiMatrix(const Eigen::MatrixXd& x, const Basis& basis) {
  Eigen::MatrixXd out(x.rows(), basis.q());
  out.col(0).setOnes();
  out.rightCols(basis.p) = x;
  return out;
}

Eigen::MatrixXd Design(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

namespace {

std::vector<std::string_view> SplitCommas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double ParseCell(std::string_view cell, std::size_t row, std::size_t line,
                 std::string_view column, const std::string& file) {
  cell = Trim(cell);
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(file + ": row " + std::to_string(row) + " (line " +
                     std::to_string(line) + "), column '" +
                     std::string(column) + "': cannot parse '" +
                     std::string(cell) + "' as a number");
  }
  return value;
}

}  // namespace

SiteData LoadSiteCsv(const std::filesystem::path& path, SiteRole role,
                     std::string site_id) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string file = path.string();
  if (site_id.empty()) site_id = path.stem().string();

  std::string line;
  if (!std::getline(in, line)) throw ParseError(file + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  std::vector<std::string> header;
  for (auto cell : SplitCommas(line)) header.emplace_back(Trim(cell));
  if (header.size() < 2 || header[0] != "y" || header[1] != "a") {
    throw ParseError(file + ": header must start with y,a");
  }
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j] != "x" + std::to_string(j - 1)) {
      throw ParseError(file + ": expected column x" + std::to_string(j - 1) +
                       ", found '" + header[j] + "'");
    }
  }
  const std::size_t cols = header.size();

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const auto cells = SplitCommas(line);
    if (cells.size() != cols) {
      throw ParseError(file + ": row " + std::to_string(rows + 1) + " (line " +
                       std::to_string(line_no) + ") has " +
                       std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      values.push_back(
          ParseCell(cells[j], rows + 1, line_no, header[j], file));
    }
    ++rows;
  }

  const auto n = static_cast<Eigen::Index>(rows);
  const auto p = static_cast<Eigen::Index>(cols - 2);
  Eigen::VectorXd y(n), a(n);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = values.data() + i * cols;
    y[i] = row[0];
    a[i] = row[1];
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = row[2 + j];
  }
  return SiteData(std::move(site_id), std::move(y), std::move(a), std::move(x),
                  role);
}

void WriteSiteCsv(const std::filesystem::path& path, const SiteData& data) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "y,a";
  for (Eigen::Index j = 0; j < data.p(); ++j) out << ",x" << j + 1;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << data.y()[i] << ',' << data.a()[i];
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << data.x()(i, j);
    out << '\n';
  }
}

}  // namespace face
