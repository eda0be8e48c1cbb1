#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace masattr {

double normal_cdf(double z);

// Two-sided p-value of the Fisher z statistic for correlation r with `dof` effective samples
// (sqrt(dof) * atanh(r)). Returns the statistic through `z_out` when given.
double fisher_z_pvalue(double r, double dof, double* z_out = nullptr);

// Partial correlation of variables i and j given `cond`, from a covariance matrix.
// nullopt when the conditioning block is numerically singular. Zero-variance variables give 0.
std::optional<double> partial_correlation(const Eigen::MatrixXd& cov, std::size_t i, std::size_t j,
                                          std::span<const std::size_t> cond);

// Orthonormal basis (columns) for the span of the centered columns of `x`; rank decided by SVD.
Eigen::MatrixXd centered_span_basis(const Eigen::MatrixXd& x, double rel_tol = 1e-9);

// Covariance of the columns of `data` after projecting out the mean and the span of `basis`.
Eigen::MatrixXd residual_covariance(const Eigen::MatrixXd& data, const Eigen::MatrixXd& basis);

// OLS with an intercept column: returns [intercept, slopes...]. Falls back to a ridge penalty on
// the slopes when the design is rank deficient; `rank_deficient` reports that.
Eigen::VectorXd ols_with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge = 1e-6,
                                   bool* rank_deficient = nullptr);

// Upper tail P[X >= k] for X ~ Binomial(n, p).
double binomial_upper_tail(std::size_t k, std::size_t n, double p);

}  // namespace masattr
