#pragma once

#include <optional>
#include <vector>

#include "mvlme/types.hpp"

namespace mvlme {

// ----- small dense Cholesky with pivot check --------------------------------

/// Lower-triangular Cholesky factor of a symmetric matrix. Fails with
/// NotPositiveDefinite when a pivot drops to <= 1e-12 * max diagonal entry.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a);

// ----- relative covariance factor -------------------------------------------

/// Block-diagonal relative covariance factor Lambda: n_groups repetitions of
/// one t x t lower-triangular block filled column-major from theta.
struct LambdaFactor {
    Eigen::MatrixXd block;  ///< t x t, lower triangular
    int n_groups = 0;

    int t() const { return static_cast<int>(block.rows()); }
    int dim() const { return n_groups * t(); }
    Eigen::MatrixXd dense() const;  ///< materialized q x q factor (tests/oracles)
};

LambdaFactor build_lambda(const Eigen::VectorXd& theta, int t, int n_groups);

/// Packs the lower triangle of a t x t matrix column-major (inverse of
/// build_lambda's fill).
Eigen::VectorXd pack_lower_triangle(const Eigen::MatrixXd& m);

// ----- spherical random-effects covariance ----------------------------------

/// Covariance of the spherical random effects u in group-major ordering:
/// block-diagonal with n_groups identical copies of per_group_block.
struct SigmaU {
    Eigen::MatrixXd per_group_block;       ///< (t1+t2) x (t1+t2), SPD
    Eigen::MatrixXd inverse_factor_block;  ///< upper-triangular S, S^T S = per_group_block^{-1}
    int n_groups = 0;
    double log_det = 0.0;  ///< n_groups * logdet(per_group_block)

    int block_dim() const { return static_cast<int>(per_group_block.rows()); }
    /// per_group_block^{-1}, recomputed from the stored factor.
    Eigen::MatrixXd block_inverse() const;
    Eigen::MatrixXd dense() const;  ///< full q x q matrix (tests/oracles)
};

/// Assembles Sigma_u for the bivariate model. The per-group block is
/// [[sigma1^2 I, sigma1 sigma2 rho], [sigma1 sigma2 rho^T, sigma2^2 I]];
/// throws NotPositiveDefinite when it is not positive definite (equivalently
/// when the largest singular value of rho reaches 1).
SigmaU assemble_sigma_u(const VarianceParams& params, int n_groups);

/// Sigma_u of a single-dimension reduction: sigma^2 I_t per group.
SigmaU marginal_sigma_u(double sigma, int t, int n_groups);

// ----- per-group covariance of the random effects ----------------------------

/// Per-group covariance of gamma_i, ordered (dimension-1 terms, dimension-2
/// terms):
///   [[s1^2 l1 l1^T, s1 s2 l1 rho l2^T], [s1 s2 l2 rho^T l1^T, s2^2 l2 l2^T]].
Eigen::MatrixXd assemble_gamma_bar(const VarianceParams& params);

/// Inverse of assemble_gamma_bar given the sigmas: recovers (theta1, theta2,
/// rho) from a per-group covariance matrix. Returns nullopt when a diagonal
/// block is not positive definite or the implied rho block is infeasible.
std::optional<VarianceParams> variance_params_from_gamma_bar(
    const Eigen::MatrixXd& gamma_bar, int t1, int t2, double sigma1, double sigma2);

/// Index map from group-major u ordering (per group: t1 dimension-1 terms,
/// then t2 dimension-2 terms) to dimension-major ordering (all dimension-1
/// terms, then all dimension-2 terms): perm[group_major_pos] = dim_major_pos.
std::vector<int> group_major_permutation(int n_groups, int t1, int t2);

}  // namespace mvlme
