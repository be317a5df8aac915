#pragma once

#include <cstdint>

#include "mvlme/types.hpp"

namespace mvlme {

/// Longitudinal working design: per dimension the fixed design is
/// (1, sex, Nscore, age) and the random design is (1, Nscore). sex is drawn
/// once per group (subject level); Nscore and age per observation.
struct SimConfig {
    int n_total = 3000;  ///< N
    int n_groups = 300;  ///< n
    Eigen::VectorXd beta1;       ///< length 4
    Eigen::VectorXd beta2;       ///< length 4
    Eigen::MatrixXd gamma_bar;   ///< 4 x 4 SPD, order (int1, slope1, int2, slope2)
    double sigma1 = 5.80;
    double sigma2 = 7.60;
    double nscore_min = 20.0, nscore_max = 50.0;
    double age_min = 18.0, age_max = 37.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// The default working configuration (true parameter values used throughout
/// the benchmark experiments).
SimConfig default_config();

/// Structured construction of a 4x4 random-effects covariance from standard
/// deviations (eta1, eta2) of dimension 1's terms, (tau1, tau2) of dimension
/// 2's terms, within-dimension correlations rho_eta / rho_tau, and one shared
/// cross-dimension correlation rho.
struct GammaBarBuilder {
    double eta1 = 1.0, eta2 = 1.0;
    double tau1 = 1.0, tau2 = 1.0;
    double rho_eta = 0.0, rho_tau = 0.0, rho = 0.0;
};

struct BuilderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// [[eta1^2, rho_eta eta1 eta2, rho eta1 tau1, rho eta1 tau2], ...],
/// symmetrized; throws BuilderError when the result is not positive definite.
Eigen::MatrixXd build_gamma_bar(const GammaBarBuilder& b);

struct SimulatedData {
    GroupedBivariateData data;
    Eigen::MatrixXd gamma;  ///< n_groups x 4 realized random effects
};

/// Simulates a dataset. Group sizes are floor(N/n) with the first N mod n
/// groups one row larger. Per-group draw streams derive as
/// derive_seed(seed, group), so generation order is schedule independent.
SimulatedData simulate_with_effects(const SimConfig& config);
GroupedBivariateData simulate(const SimConfig& config);

}  // namespace mvlme
