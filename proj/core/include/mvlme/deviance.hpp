#pragma once

#include <vector>

#include "mvlme/model.hpp"
#include "mvlme/types.hpp"

namespace mvlme {

// ----- scaled least-squares system -------------------------------------------

/// The scaled system behind the profiled criteria. Row blocks of dimension k
/// carry the scale c_k with c_k^2 = prod_{j != k} sigma_j^2 (so c_1 = sigma2
/// and c_2 = sigma1 in the bivariate model, c_1 = 1 in a single-dimension
/// reduction). Dense 2N-row matrices are never formed: the random-effects
/// columns are kept as per-group blocks and all products accumulate group by
/// group.
struct ScaledSystem {
    std::vector<Eigen::VectorXd> y_scaled;               ///< per dim, length N
    std::vector<Eigen::MatrixXd> x_scaled;               ///< per dim, N x p_k
    std::vector<std::vector<Eigen::MatrixXd>> z_scaled;  ///< [dim][group], n_i x t_k: c_k Z_ki lambda_k
    SigmaU sigma_u;           ///< penalty block, group-major ordering
    double sigma_prod = 1.0;  ///< prod_k sigma_k^2
    double sum_log_sigma_sq = 0.0;
    std::vector<int> t;
    std::vector<int> group_sizes;
    std::vector<int> group_offsets;

    int n_dims() const { return static_cast<int>(y_scaled.size()); }
    int n_groups() const { return static_cast<int>(group_sizes.size()); }
    int n_obs() const;  ///< N, per dimension
    int t_total() const;
    int q() const { return n_groups() * t_total(); }
    int p(int k) const { return static_cast<int>(x_scaled[static_cast<std::size_t>(k)].cols()); }
    int p_total() const;

    /// The stacked scaled response (c_1 y_1^T, ..., c_d y_d^T)^T.
    Eigen::VectorXd stacked_y() const;
};

ScaledSystem build_scaled_system(const GroupedBivariateData& data, const VarianceParams& params);

/// Single-dimension reduction used by the advised initialization: same
/// machinery with the other dimension absent, penalty sigma^2 I per group.
ScaledSystem build_marginal_system(const GroupedBivariateData& data, int dim,
                                   const Eigen::VectorXd& theta, double sigma);

// ----- profiled solution ------------------------------------------------------

struct ProfiledSolution {
    Eigen::VectorXd beta_hat;  ///< stacked (beta_1; beta_2), length p
    Eigen::VectorXd mu;        ///< conditional mean of u, dimension-major, length q
    double r_value = 0.0;      ///< penalized residual sum of squares r(beta_hat, mu)
    double logdet_L_sq = 0.0;  ///< log |L|^2
    double logdet_RX_sq = 0.0; ///< log |R_X|^2
    Eigen::MatrixXd r_x;       ///< p x p upper-triangular fixed-effects factor
};

/// Solves the normal equations of the scaled system by block Cholesky:
/// L L^T = Z^T Z + sigma_prod Sigma_u^{-1} (n identical-size group blocks),
/// then R_ZX, then R_X, then beta_hat and mu by triangular solves, and
/// finally r = |Y - X beta - Z mu|^2 + sigma_prod mu^T Sigma_u^{-1} mu.
/// Throws RankDeficientFixedDesign when the fixed-effects factor fails.
ProfiledSolution profiled_solve(const ScaledSystem& sys);

// ----- criteria ----------------------------------------------------------------

/// Profiled deviance evaluated from an already-solved system:
///   r/sigma_prod + (N - q) log sigma_prod + log|Sigma_u| + log|L|^2
/// (in the generic form N sum_k log sigma_k^2 - q log sigma_prod, which
/// reduces to the above for two dimensions and to the standard single-response
/// profiled deviance for one).
double ml_deviance(const ScaledSystem& sys, const ProfiledSolution& sol);

/// REML criterion: r/sigma_prod + (N - p - q) log sigma_prod + log|Sigma_u|
/// + log|L|^2 + log|R_X|^2.
double reml_criterion(const ScaledSystem& sys, const ProfiledSolution& sol);

double ml_deviance(const GroupedBivariateData& data, const VarianceParams& params);
double reml_criterion(const GroupedBivariateData& data, const VarianceParams& params);

/// Full log-likelihood at an arbitrary beta, including the -N log(2 pi)
/// additive constant so the value is a proper log-density.
double loglik(const GroupedBivariateData& data, const FixedEffects& beta,
              const VarianceParams& params);

// ----- dense oracle -------------------------------------------------------------

/// O(N^3) log-density of the stacked observations under the exact marginal
/// Gaussian y ~ N(X beta, Z Gamma Z^T + diag(s1^2 I, s2^2 I)). Test oracle,
/// guarded to 2N <= 500; not part of the fit path.
double direct_mvn_loglik(const GroupedBivariateData& data, const FixedEffects& beta,
                         const VarianceParams& params);

}  // namespace mvlme
