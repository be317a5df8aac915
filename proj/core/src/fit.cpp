#include "mvlme/fit.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace mvlme {

void FitOptions::validate() const {
    if (!(convergence_tol > 0.0)) throw ShapeError("convergence_tol must be positive");
    if (max_evaluations < 10) throw ShapeError("max_evaluations must be at least 10");
    if (n_restarts < 1) throw ShapeError("n_restarts must be at least 1");
}

// ----- packing -------------------------------------------------------------------

Eigen::VectorXd pack(const VarianceParams& params) {
    params.validate();
    const Eigen::Index l1 = params.theta1.size();
    const Eigen::Index l2 = params.theta2.size();
    const Eigen::Index lr = params.rho.size();
    Eigen::VectorXd v(l1 + l2 + lr + 2);
    v.head(l1) = params.theta1;
    v.segment(l1, l2) = params.theta2;
    v.segment(l1 + l2, lr) = Eigen::Map<const Eigen::VectorXd>(params.rho.data(), lr);
    v(l1 + l2 + lr) = std::log(params.sigma1);
    v(l1 + l2 + lr + 1) = std::log(params.sigma2);
    return v;
}

VarianceParams unpack(const Eigen::VectorXd& packed, int t1, int t2) {
    const Eigen::Index l1 = static_cast<Eigen::Index>(t1) * (t1 + 1) / 2;
    const Eigen::Index l2 = static_cast<Eigen::Index>(t2) * (t2 + 1) / 2;
    const Eigen::Index lr = static_cast<Eigen::Index>(t1) * t2;
    if (packed.size() != l1 + l2 + lr + 2) {
        throw ShapeError("packed parameter vector has the wrong length");
    }
    VarianceParams p;
    p.theta1 = packed.head(l1);
    p.theta2 = packed.segment(l1, l2);
    p.rho = Eigen::Map<const Eigen::MatrixXd>(packed.segment(l1 + l2, lr).data(), t1, t2);
    p.sigma1 = std::exp(packed(l1 + l2 + lr));
    p.sigma2 = std::exp(packed(l1 + l2 + lr + 1));
    return p;
}

// ----- objective ------------------------------------------------------------------

double objective(const Eigen::VectorXd& packed, const GroupedBivariateData& data,
                 FitCriterion criterion) {
    if (!packed.allFinite()) return kInfeasibleObjective;
    try {
        VarianceParams p = unpack(packed, data.t(0), data.t(1));
        if (!(p.sigma1 > 0.0) || !std::isfinite(p.sigma1) || !(p.sigma2 > 0.0) ||
            !std::isfinite(p.sigma2)) {
            return kInfeasibleObjective;
        }
        const double v = (criterion == FitCriterion::ml) ? ml_deviance(data, p)
                                                         : reml_criterion(data, p);
        return std::isfinite(v) ? v : kInfeasibleObjective;
    } catch (const NotPositiveDefinite&) {
        return kInfeasibleObjective;
    } catch (const RankDeficientFixedDesign&) {
        return kInfeasibleObjective;
    }
}

// ----- initialization -------------------------------------------------------------

VarianceParams naive_init(int t1, int t2, RngStream& rng) {
    auto draw_theta = [&](int t) {
        Eigen::VectorXd theta(t * (t + 1) / 2);
        int idx = 0;
        for (int col = 0; col < t; ++col) {
            for (int row = col; row < t; ++row) {
                theta(idx++) = (row == col) ? rng.uniform(0.5, 2.0) : rng.uniform(-0.5, 0.5);
            }
        }
        return theta;
    };
    VarianceParams p;
    p.theta1 = draw_theta(t1);
    p.theta2 = draw_theta(t2);
    p.rho.resize(t1, t2);
    for (int c = 0; c < t2; ++c) {
        for (int r = 0; r < t1; ++r) p.rho(r, c) = rng.uniform(-0.3, 0.3);
    }
    // Entries in (-0.3, 0.3) keep the largest singular value below 1 for the
    // term counts used here; rescale to stay feasible for larger blocks.
    const double sv = p.rho.jacobiSvd().singularValues()(0);
    if (sv >= 0.95) p.rho *= 0.9 / sv;
    p.sigma1 = rng.uniform(0.5, 10.0);
    p.sigma2 = rng.uniform(0.5, 10.0);
    return p;
}

MarginalFit fit_marginal(const GroupedBivariateData& data, int dim, const FitOptions& options) {
    options.validate();
    const DimensionDesign& d = data.dims[static_cast<std::size_t>(dim)];
    const int t = d.t;
    const Eigen::Index lt = static_cast<Eigen::Index>(t) * (t + 1) / 2;

    // Start at lambda = identity and the OLS residual scale.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(lt + 1);
    {
        int idx = 0;
        for (int col = 0; col < t; ++col) {
            for (int row = col; row < t; ++row) {
                x0(idx++) = (row == col) ? 1.0 : 0.0;
            }
        }
        Eigen::VectorXd beta_ols = d.X.colPivHouseholderQr().solve(d.y);
        const double rss = (d.y - d.X * beta_ols).squaredNorm();
        const double s0 = std::sqrt(rss / std::max(1, data.n_obs()));
        x0(lt) = std::log(std::max(s0, 1e-8));
    }

    auto f = [&](const Eigen::VectorXd& v) {
        if (!v.allFinite()) return kInfeasibleObjective;
        const double sigma = std::exp(v(lt));
        if (!(sigma > 0.0) || !std::isfinite(sigma)) return kInfeasibleObjective;
        try {
            ScaledSystem sys = build_marginal_system(data, dim, v.head(lt), sigma);
            const double dev = ml_deviance(sys, profiled_solve(sys));
            return std::isfinite(dev) ? dev : kInfeasibleObjective;
        } catch (const NotPositiveDefinite&) {
            return kInfeasibleObjective;
        } catch (const RankDeficientFixedDesign&) {
            return kInfeasibleObjective;
        }
    };

    MinimizeOptions mo;
    mo.rel_tol = options.convergence_tol;
    mo.max_evaluations = options.max_evaluations;
    MinimizeResult m = minimize_qn(f, x0, mo);

    MarginalFit out;
    out.theta = m.x.head(lt);
    out.sigma = std::exp(m.x(lt));
    out.deviance = m.value;
    out.evaluations = m.evaluations;
    out.converged = m.converged;
    ScaledSystem sys = build_marginal_system(data, dim, out.theta, out.sigma);
    out.beta = profiled_solve(sys).beta_hat;
    return out;
}

VarianceParams advised_init(const GroupedBivariateData& data, const FitOptions& options) {
    try {
        MarginalFit m1 = fit_marginal(data, 0, options);
        MarginalFit m2 = fit_marginal(data, 1, options);
        VarianceParams p;
        p.theta1 = m1.theta;
        p.theta2 = m2.theta;
        p.rho = Eigen::MatrixXd::Zero(data.t(0), data.t(1));
        p.sigma1 = m1.sigma;
        p.sigma2 = m2.sigma;
        p.validate();
        return p;
    } catch (const std::exception& e) {
        std::cerr << "advised_init: marginal fit failed (" << e.what()
                  << "), falling back to naive starting values\n";
        RngStream rng(derive_seed(options.rng_seed, 0x61647669ULL));
        return naive_init(data.t(0), data.t(1), rng);
    }
}

// ----- fit ------------------------------------------------------------------------

FitResult fit(const GroupedBivariateData& data, const VarianceParams& init,
              const FitOptions& options) {
    options.validate();
    init.validate();
    if (init.t1() != data.t(0) || init.t2() != data.t(1)) {
        throw ShapeError("init does not match the data's random-effect term counts");
    }

    auto f = [&](const Eigen::VectorXd& v) { return objective(v, data, options.criterion); };
    MinimizeOptions mo;
    mo.rel_tol = options.convergence_tol;
    mo.max_evaluations = options.max_evaluations;

    bool have_best = false;
    MinimizeResult best;
    Eigen::VectorXd best_start;
    int total_evals = 0;
    int total_iters = 0;
    int feasible_starts = 0;
    for (int r = 0; r < options.n_restarts; ++r) {
        Eigen::VectorXd x0;
        if (r == 0) {
            x0 = pack(init);
        } else {
            RngStream rng(derive_seed(options.rng_seed, 0x72657374ULL, static_cast<std::uint64_t>(r)));
            x0 = pack(naive_init(data.t(0), data.t(1), rng));
        }
        MinimizeResult m;
        try {
            m = minimize_qn(f, x0, mo);
        } catch (const InitError&) {
            continue;
        }
        ++feasible_starts;
        total_evals += m.evaluations;
        total_iters += m.iterations;
        if (!have_best || m.value < best.value) {
            have_best = true;
            best = m;
            best_start = x0;
        }
    }
    if (!have_best || feasible_starts == 0) {
        throw InitError("objective is infeasible at every starting point");
    }

    FitResult out;
    out.params = unpack(best.x, data.t(0), data.t(1));
    ScaledSystem sys = build_scaled_system(data, out.params);
    ProfiledSolution sol = profiled_solve(sys);
    out.criterion_value = (options.criterion == FitCriterion::ml) ? ml_deviance(sys, sol)
                                                                  : reml_criterion(sys, sol);
    out.beta.beta1 = sol.beta_hat.head(data.p(0));
    out.beta.beta2 = sol.beta_hat.tail(data.p(1));
    out.mu = sol.mu;
    out.gamma_bar = assemble_gamma_bar(out.params);
    out.iterations = total_evals;
    out.outer_iterations = total_iters;
    out.converged = best.converged;
    out.init_used = best_start;
    return out;
}

}  // namespace mvlme
