#include "masattr/stats.hpp"

#include <algorithm>
#include <cmath>

namespace masattr {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double fisher_z_pvalue(double r, double dof, double* z_out) {
  const double rc = std::clamp(r, -1.0 + 1e-15, 1.0 - 1e-15);
  const double z = std::sqrt(std::max(dof, 0.0)) * std::atanh(rc);
  if (z_out) *z_out = z;
  return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
}

std::optional<double> partial_correlation(const Eigen::MatrixXd& cov, std::size_t i, std::size_t j,
                                          std::span<const std::size_t> cond) {
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  const double scale = std::max({cov.diagonal().cwiseAbs().maxCoeff(), 1e-300});
  if (cov(ii, ii) <= 1e-12 * scale || cov(jj, jj) <= 1e-12 * scale) return 0.0;

  Eigen::Matrix2d s;
  s << cov(ii, ii), cov(ii, jj), cov(jj, ii), cov(jj, jj);
  if (!cond.empty()) {
    const auto k = static_cast<Eigen::Index>(cond.size());
    Eigen::MatrixXd cc(k, k);
    Eigen::MatrixXd ac(2, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto ca = static_cast<Eigen::Index>(cond[static_cast<std::size_t>(a)]);
      ac(0, a) = cov(ii, ca);
      ac(1, a) = cov(jj, ca);
      for (Eigen::Index b = 0; b < k; ++b) cc(a, b) = cov(ca, static_cast<Eigen::Index>(cond[static_cast<std::size_t>(b)]));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cc);
    const auto& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 1e-10 * std::max(ev.maxCoeff(), 1e-300)) return std::nullopt;
    s -= ac * eig.operatorInverseSqrt() * eig.operatorInverseSqrt() * ac.transpose();
  }
  if (s(0, 0) <= 1e-12 * scale || s(1, 1) <= 1e-12 * scale) return 0.0;
  return std::clamp(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)), -1.0, 1.0);
}

Eigen::MatrixXd centered_span_basis(const Eigen::MatrixXd& x, double rel_tol) {
  if (x.cols() == 0 || x.rows() == 0) return Eigen::MatrixXd(x.rows(), 0);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  Eigen::Index rank = 0;
  if (sv.size() > 0 && sv(0) > 0) {
    while (rank < sv.size() && sv(rank) > rel_tol * sv(0)) ++rank;
  }
  return svd.matrixU().leftCols(rank);
}

Eigen::MatrixXd residual_covariance(const Eigen::MatrixXd& data, const Eigen::MatrixXd& basis) {
  Eigen::MatrixXd r = data.rowwise() - data.colwise().mean();
  if (basis.cols() > 0) r -= basis * (basis.transpose() * r);
  const double denom = std::max<double>(1.0, static_cast<double>(data.rows()) - 1.0);
  return (r.transpose() * r) / denom;
}

Eigen::VectorXd ols_with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge,
                                   bool* rank_deficient) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() == p + 1) {
    if (rank_deficient) *rank_deficient = false;
    return qr.solve(y);
  }
  if (rank_deficient) *rank_deficient = true;
  Eigen::MatrixXd gram = design.transpose() * design;
  for (Eigen::Index k = 1; k <= p; ++k) gram(k, k) += ridge;
  if (p == 0) gram(0, 0) += ridge;
  return gram.ldlt().solve(design.transpose() * y);
}

double binomial_upper_tail(std::size_t k, std::size_t n, double p) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double dn = static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double di = static_cast<double>(i);
    total += std::exp(std::lgamma(dn + 1) - std::lgamma(di + 1) - std::lgamma(dn - di + 1) + di * std::log(p) +
                      (dn - di) * std::log1p(-p));
  }
  return std::min(1.0, total);
}

}  // namespace masattr
