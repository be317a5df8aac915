#pragma once

#include <optional>
#include <vector>

#include "mvlme/types.hpp"

namespace mvlme {

struct EmOptions {
    double tol = 1e-8;    ///< relative marginal log-likelihood change
    int max_iter = 2000;  ///< EM sweeps

    void validate() const;
};

struct EmInit {
    FixedEffects beta;
    Eigen::MatrixXd gamma_bar;  ///< positive definite (t1+t2) block
    double sigma1 = 1.0;
    double sigma2 = 1.0;
};

struct EmFit {
    FixedEffects beta;
    Eigen::MatrixXd gamma_bar;
    double sigma1 = 1.0;
    double sigma2 = 1.0;
    /// Back-solved (theta, rho, sigma) when gamma_bar is feasible; empty when
    /// the cross block is infeasible and gamma_bar stands on its own.
    std::optional<VarianceParams> params;
    int iterations = 0;  ///< EM sweeps performed
    bool converged = false;
    double initial_loglik = 0.0;
    std::vector<double> loglik_trace;  ///< marginal log-likelihood after each sweep
};

/// Marginal log-likelihood of the grouped data at (beta, gamma_bar, sigma),
/// accumulated over the independent per-group Gaussians. Equals
/// direct_mvn_loglik at matching parameters.
double em_marginal_loglik(const GroupedBivariateData& data, const FixedEffects& beta,
                          const Eigen::MatrixXd& gamma_bar, double sigma1, double sigma2);

/// Conditional moments of gamma_i given y_i at the current parameters:
/// m_i = Gbar Zbar_i^T V_i^{-1} (ybar_i - Xbar_i beta),
/// C_i = Gbar - Gbar Zbar_i^T V_i^{-1} Zbar_i Gbar,
/// with V_i = Zbar_i Gbar Zbar_i^T + R_i over the group-stacked blocks.
struct EmMoments {
    std::vector<Eigen::VectorXd> m;
    std::vector<Eigen::MatrixXd> c;
};
EmMoments em_estep(const GroupedBivariateData& data, const FixedEffects& beta,
                   const Eigen::MatrixXd& gamma_bar, double sigma1, double sigma2);

/// Complete-data EM for the bivariate model. E-step: per-group conditional
/// mean m_i and covariance C_i of gamma_i given y_i. M-step: beta by least
/// squares on y - Z E[gamma], gamma_bar <- (1/n) sum (m m^T + C), sigma_k^2
/// <- (1/N) sum E|y_k - X_k beta_k - Z_k gamma_k|^2. Stops when the relative
/// marginal log-likelihood change drops below tol.
EmFit em_fit(const GroupedBivariateData& data, const EmInit& init, const EmOptions& options = {});

}  // namespace mvlme
