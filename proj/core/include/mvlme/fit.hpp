#pragma once

#include <cstdint>

#include "mvlme/deviance.hpp"
#include "mvlme/optim.hpp"
#include "mvlme/rng.hpp"
#include "mvlme/types.hpp"

namespace mvlme {

enum class FitCriterion { ml, reml };

struct FitOptions {
    FitCriterion criterion = FitCriterion::ml;
    int max_evaluations = 5000;
    double convergence_tol = 1e-8;  ///< relative objective change
    int n_restarts = 1;
    std::uint64_t rng_seed = 0;

    void validate() const;  ///< tolerances positive, max_evaluations >= 10
};

struct FitResult {
    VarianceParams params;
    FixedEffects beta;
    Eigen::VectorXd mu;        ///< dimension-major conditional mean of u
    Eigen::MatrixXd gamma_bar;
    double criterion_value = 0.0;
    int iterations = 0;        ///< objective evaluations (all restarts)
    int outer_iterations = 0;  ///< accepted quasi-Newton steps (all restarts)
    bool converged = false;
    Eigen::VectorXd init_used; ///< packed start of the reported restart
};

// ----- packing ------------------------------------------------------------------

/// Packs (theta1, theta2, rho column-major, log sigma1, log sigma2) into one
/// unconstrained vector. rho feasibility is enforced by the objective
/// barrier, not by the transform.
Eigen::VectorXd pack(const VarianceParams& params);
VarianceParams unpack(const Eigen::VectorXd& packed, int t1, int t2);

/// Criterion value at a packed point; infeasible points (rho singular value
/// >= 1, non-finite entries, factorization failures) map to
/// kInfeasibleObjective.
double objective(const Eigen::VectorXd& packed, const GroupedBivariateData& data,
                 FitCriterion criterion);

// ----- fitting ------------------------------------------------------------------

/// Minimizes the selected criterion over (theta1, theta2, rho, sigma1,
/// sigma2) from the given feasible start, then recovers beta, mu, and
/// gamma_bar from one final profiled solve. Additional restarts (n_restarts
/// > 1) draw naive starts from rng_seed; the reported result is the restart
/// with the lowest criterion, ties broken by restart index.
FitResult fit(const GroupedBivariateData& data, const VarianceParams& init,
              const FitOptions& options = {});

/// Random feasible starting values: theta diagonal ~ U(0.5, 2), theta
/// off-diagonal ~ U(-0.5, 0.5), rho entries ~ U(-0.3, 0.3), sigma ~ U(0.5, 10).
VarianceParams naive_init(int t1, int t2, RngStream& rng);

/// Result of a single-dimension profiled fit.
struct MarginalFit {
    Eigen::VectorXd theta;
    double sigma = 1.0;
    Eigen::VectorXd beta;
    double deviance = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Fits dimension `dim` alone with the same profiled machinery (reduced
/// system, standard single-response profiled deviance).
MarginalFit fit_marginal(const GroupedBivariateData& data, int dim,
                         const FitOptions& options = {});

/// Starting values from separate univariate fits of each dimension; rho = 0.
/// Falls back to naive_init (with a warning on stderr) if a marginal fit
/// fails.
VarianceParams advised_init(const GroupedBivariateData& data, const FitOptions& options = {});

}  // namespace mvlme
