#include "mvlme/simulate.hpp"

#include <cmath>

#include "mvlme/model.hpp"
#include "mvlme/rng.hpp"

namespace mvlme {

void SimConfig::validate() const {
    if (n_groups < 1 || n_total < n_groups) throw ShapeError("need N >= n >= 1");
    if (beta1.size() != 4 || beta2.size() != 4) throw ShapeError("beta1/beta2 must have length 4");
    if (gamma_bar.rows() != 4 || gamma_bar.cols() != 4) throw ShapeError("gamma_bar must be 4x4");
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw ShapeError("sigmas must be positive");
    if (!(nscore_max > nscore_min) || !(age_max > age_min)) {
        throw ShapeError("covariate ranges must be non-empty");
    }
    cholesky_lower(gamma_bar);  // SPD check
}

SimConfig default_config() {
    SimConfig c;
    c.n_total = 3000;
    c.n_groups = 300;
    c.beta1 = (Eigen::VectorXd(4) << 50.67, -4.80, 14.00, 2.70).finished();
    c.beta2 = (Eigen::VectorXd(4) << 13.20, -2.80, 27.00, 1.70).finished();
    c.gamma_bar = (Eigen::MatrixXd(4, 4) << 27.77, 18.80, 41.70, 4.93,
                                            18.80, 36.00, 47.47, 5.62,
                                            41.70, 47.47, 97.81, 8.91,
                                             4.93,  5.62,  8.91, 1.37).finished();
    c.sigma1 = 5.80;
    c.sigma2 = 7.60;
    return c;
}

Eigen::MatrixXd build_gamma_bar(const GammaBarBuilder& b) {
    Eigen::MatrixXd g(4, 4);
    g << b.eta1 * b.eta1, b.rho_eta * b.eta1 * b.eta2, b.rho * b.eta1 * b.tau1, b.rho * b.eta1 * b.tau2,
         b.rho_eta * b.eta1 * b.eta2, b.eta2 * b.eta2, b.rho * b.eta2 * b.tau1, b.rho * b.eta2 * b.tau2,
         b.rho * b.eta1 * b.tau1, b.rho * b.eta2 * b.tau1, b.tau1 * b.tau1, b.rho_tau * b.tau1 * b.tau2,
         b.rho * b.eta1 * b.tau2, b.rho * b.eta2 * b.tau2, b.rho_tau * b.tau1 * b.tau2, b.tau2 * b.tau2;
    g = 0.5 * (g + g.transpose()).eval();
    try {
        cholesky_lower(g);
    } catch (const NotPositiveDefinite&) {
        throw BuilderError("assembled gamma_bar is not positive definite");
    }
    return g;
}

SimulatedData simulate_with_effects(const SimConfig& config) {
    config.validate();
    const int n = config.n_groups;
    const int N = config.n_total;
    const int base = N / n;
    const int extra = N % n;

    const Eigen::MatrixXd gamma_chol = cholesky_lower(config.gamma_bar);

    SimulatedData out;
    GroupedBivariateData& data = out.data;
    data.group_sizes.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        data.group_sizes[static_cast<std::size_t>(i)] = base + (i < extra ? 1 : 0);
    }
    data.rebuild_indexing();

    for (int k = 0; k < 2; ++k) {
        data.dims[static_cast<std::size_t>(k)].t = 2;
        data.dims[static_cast<std::size_t>(k)].y.resize(N);
        data.dims[static_cast<std::size_t>(k)].X.resize(N, 4);
        data.dims[static_cast<std::size_t>(k)].Z.resize(static_cast<std::size_t>(n));
    }
    out.gamma.resize(n, 4);

    for (int i = 0; i < n; ++i) {
        RngStream rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
        const int off = data.group_offsets[static_cast<std::size_t>(i)];
        const int ni = data.group_sizes[static_cast<std::size_t>(i)];

        // Draw order per group: sex, per-row covariates, gamma, dim-1 noise,
        // dim-2 noise.
        const double sex = rng.bernoulli() ? 1.0 : 0.0;
        Eigen::MatrixXd x(ni, 4);
        for (int r = 0; r < ni; ++r) {
            x(r, 0) = 1.0;
            x(r, 1) = sex;
            x(r, 2) = rng.uniform(config.nscore_min, config.nscore_max);
            x(r, 3) = rng.uniform(config.age_min, config.age_max);
        }
        Eigen::VectorXd z4(4);
        for (int j = 0; j < 4; ++j) z4(j) = rng.normal();
        const Eigen::VectorXd gamma_i = gamma_chol * z4;
        out.gamma.row(i) = gamma_i.transpose();

        Eigen::MatrixXd zb(ni, 2);
        zb.col(0).setOnes();
        zb.col(1) = x.col(2);

        const Eigen::VectorXd* betas[2] = {&config.beta1, &config.beta2};
        const double sigmas[2] = {config.sigma1, config.sigma2};
        for (int k = 0; k < 2; ++k) {
            DimensionDesign& d = data.dims[static_cast<std::size_t>(k)];
            d.X.middleRows(off, ni) = x;
            d.Z[static_cast<std::size_t>(i)] = zb;
            Eigen::VectorXd eps(ni);
            for (int r = 0; r < ni; ++r) eps(r) = sigmas[k] * rng.normal();
            d.y.segment(off, ni) =
                x * (*betas[k]) + zb * gamma_i.segment(2 * k, 2) + eps;
        }
    }
    data.validate();
    return out;
}

GroupedBivariateData simulate(const SimConfig& config) {
    return simulate_with_effects(config).data;
}

}  // namespace mvlme
