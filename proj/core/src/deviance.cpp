#include "mvlme/deviance.hpp"

#include <cmath>
#include <numeric>

#include "mvlme/rng.hpp"

namespace mvlme {

int ScaledSystem::n_obs() const {
    return std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
}

int ScaledSystem::t_total() const { return std::accumulate(t.begin(), t.end(), 0); }

int ScaledSystem::p_total() const {
    int p = 0;
    for (const auto& x : x_scaled) p += static_cast<int>(x.cols());
    return p;
}

Eigen::VectorXd ScaledSystem::stacked_y() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(n_dims()) * n_obs());
    Eigen::Index off = 0;
    for (const auto& y : y_scaled) {
        out.segment(off, y.size()) = y;
        off += y.size();
    }
    return out;
}

// ----- system assembly --------------------------------------------------------

ScaledSystem build_scaled_system(const GroupedBivariateData& data, const VarianceParams& params) {
    params.validate();
    if (params.t1() != data.t(0) || params.t2() != data.t(1)) {
        throw ShapeError("theta lengths do not match the data's random-effect term counts");
    }
    const int n = data.n_groups();
    const double s1 = params.sigma1;
    const double s2 = params.sigma2;

    ScaledSystem sys;
    sys.sigma_u = assemble_sigma_u(params, n);
    sys.sigma_prod = s1 * s1 * s2 * s2;
    sys.sum_log_sigma_sq = 2.0 * (std::log(s1) + std::log(s2));
    sys.t = {data.t(0), data.t(1)};
    sys.group_sizes = data.group_sizes;
    sys.group_offsets = data.group_offsets;

    const double scale[2] = {s2, s1};  // c_k = sqrt(prod_{j != k} sigma_j^2)
    const Eigen::MatrixXd lambda[2] = {build_lambda(params.theta1, data.t(0), 1).block,
                                       build_lambda(params.theta2, data.t(1), 1).block};
    sys.y_scaled.resize(2);
    sys.x_scaled.resize(2);
    sys.z_scaled.resize(2);
    for (int k = 0; k < 2; ++k) {
        const DimensionDesign& d = data.dims[static_cast<std::size_t>(k)];
        sys.y_scaled[static_cast<std::size_t>(k)] = scale[k] * d.y;
        sys.x_scaled[static_cast<std::size_t>(k)] = scale[k] * d.X;
        auto& zs = sys.z_scaled[static_cast<std::size_t>(k)];
        zs.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            zs.push_back(scale[k] * (d.Z[static_cast<std::size_t>(i)] * lambda[k]));
        }
    }
    return sys;
}

ScaledSystem build_marginal_system(const GroupedBivariateData& data, int dim,
                                   const Eigen::VectorXd& theta, double sigma) {
    if (dim < 0 || dim > 1) throw ShapeError("dimension index must be 0 or 1");
    if (!(sigma > 0.0)) throw ShapeError("sigma must be positive");
    const DimensionDesign& d = data.dims[static_cast<std::size_t>(dim)];
    const int n = data.n_groups();
    const Eigen::MatrixXd lambda = build_lambda(theta, d.t, 1).block;

    ScaledSystem sys;
    sys.sigma_u = marginal_sigma_u(sigma, d.t, n);
    sys.sigma_prod = sigma * sigma;
    sys.sum_log_sigma_sq = 2.0 * std::log(sigma);
    sys.t = {d.t};
    sys.group_sizes = data.group_sizes;
    sys.group_offsets = data.group_offsets;
    sys.y_scaled = {d.y};
    sys.x_scaled = {d.X};
    sys.z_scaled.resize(1);
    sys.z_scaled[0].reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        sys.z_scaled[0].push_back(d.Z[static_cast<std::size_t>(i)] * lambda);
    }
    return sys;
}

// ----- profiled solve -----------------------------------------------------------

ProfiledSolution profiled_solve(const ScaledSystem& sys) {
    const int n = sys.n_groups();
    const int nd = sys.n_dims();
    const int T = sys.t_total();
    const int p = sys.p_total();

    std::vector<int> t_off(static_cast<std::size_t>(nd), 0);
    std::vector<int> p_off(static_cast<std::size_t>(nd), 0);
    for (int k = 1; k < nd; ++k) {
        t_off[static_cast<std::size_t>(k)] = t_off[static_cast<std::size_t>(k - 1)] + sys.t[static_cast<std::size_t>(k - 1)];
        p_off[static_cast<std::size_t>(k)] = p_off[static_cast<std::size_t>(k - 1)] + sys.p(k - 1);
    }

    const Eigen::MatrixXd su_inv = sys.sigma_u.block_inverse();
    const Eigen::MatrixXd penalty = sys.sigma_prod * su_inv;

    // Fixed-effects Gram blocks (X is block diagonal over dimensions).
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    for (int k = 0; k < nd; ++k) {
        const auto& x = sys.x_scaled[static_cast<std::size_t>(k)];
        const auto& y = sys.y_scaled[static_cast<std::size_t>(k)];
        xtx.block(p_off[static_cast<std::size_t>(k)], p_off[static_cast<std::size_t>(k)], sys.p(k), sys.p(k)) =
            x.transpose() * x;
        xty.segment(p_off[static_cast<std::size_t>(k)], sys.p(k)) = x.transpose() * y;
    }

    // Group pass 1: L_i, R_ZX_i, c_u,i.
    std::vector<Eigen::MatrixXd> L(static_cast<std::size_t>(n));
    std::vector<Eigen::MatrixXd> rzx(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> cu(static_cast<std::size_t>(n));
    Eigen::MatrixXd rx_gram = xtx;
    Eigen::VectorXd rhs_beta = xty;
    double logdet_L_sq = 0.0;

    Eigen::MatrixXd c_i(T, T);
    Eigen::MatrixXd ztx_i(T, p);
    Eigen::VectorXd zty_i(T);
    for (int i = 0; i < n; ++i) {
        const int off = sys.group_offsets[static_cast<std::size_t>(i)];
        const int ni = sys.group_sizes[static_cast<std::size_t>(i)];
        c_i = penalty;
        ztx_i.setZero();
        for (int k = 0; k < nd; ++k) {
            const auto& zb = sys.z_scaled[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            const int tk = sys.t[static_cast<std::size_t>(k)];
            c_i.block(t_off[static_cast<std::size_t>(k)], t_off[static_cast<std::size_t>(k)], tk, tk) +=
                zb.transpose() * zb;
            ztx_i.block(t_off[static_cast<std::size_t>(k)], p_off[static_cast<std::size_t>(k)], tk, sys.p(k)) =
                zb.transpose() * sys.x_scaled[static_cast<std::size_t>(k)].middleRows(off, ni);
            zty_i.segment(t_off[static_cast<std::size_t>(k)], tk) =
                zb.transpose() * sys.y_scaled[static_cast<std::size_t>(k)].segment(off, ni);
        }
        Eigen::MatrixXd& Li = L[static_cast<std::size_t>(i)];
        Li = cholesky_lower(c_i);
        logdet_L_sq += 2.0 * Li.diagonal().array().log().sum();

        rzx[static_cast<std::size_t>(i)] = Li.triangularView<Eigen::Lower>().solve(ztx_i);
        cu[static_cast<std::size_t>(i)] = Li.triangularView<Eigen::Lower>().solve(zty_i);
        rx_gram.noalias() -= rzx[static_cast<std::size_t>(i)].transpose() * rzx[static_cast<std::size_t>(i)];
        rhs_beta.noalias() -= rzx[static_cast<std::size_t>(i)].transpose() * cu[static_cast<std::size_t>(i)];
    }

    Eigen::MatrixXd rx_lower;
    try {
        rx_lower = cholesky_lower(0.5 * (rx_gram + rx_gram.transpose()));
    } catch (const NotPositiveDefinite& e) {
        throw RankDeficientFixedDesign(
            "fixed-effects normal-equation block is singular (pivot " +
            std::to_string(e.pivot_index) + ")");
    }

    ProfiledSolution sol;
    sol.r_x = rx_lower.transpose();
    sol.logdet_L_sq = logdet_L_sq;
    sol.logdet_RX_sq = 2.0 * rx_lower.diagonal().array().log().sum();

    // beta: R_X^T R_X beta = rhs_beta.
    Eigen::VectorXd w_beta = rx_lower.triangularView<Eigen::Lower>().solve(rhs_beta);
    sol.beta_hat = sol.r_x.triangularView<Eigen::Upper>().solve(w_beta);

    // Per-group u and the penalized residual.
    const int q1 = (nd > 1) ? n * sys.t[0] : 0;
    sol.mu.resize(static_cast<Eigen::Index>(n) * T);
    double r = 0.0;
    Eigen::VectorXd mu_i(T);
    for (int i = 0; i < n; ++i) {
        const int off = sys.group_offsets[static_cast<std::size_t>(i)];
        const int ni = sys.group_sizes[static_cast<std::size_t>(i)];
        mu_i = cu[static_cast<std::size_t>(i)] - rzx[static_cast<std::size_t>(i)] * sol.beta_hat;
        mu_i = L[static_cast<std::size_t>(i)].transpose().triangularView<Eigen::Upper>().solve(mu_i);

        for (int k = 0; k < nd; ++k) {
            const int tk = sys.t[static_cast<std::size_t>(k)];
            // dimension-major output ordering
            const int base = (k == 0) ? i * sys.t[0] : q1 + i * sys.t[1];
            sol.mu.segment(base, tk) = mu_i.segment(t_off[static_cast<std::size_t>(k)], tk);

            Eigen::VectorXd res =
                sys.y_scaled[static_cast<std::size_t>(k)].segment(off, ni) -
                sys.x_scaled[static_cast<std::size_t>(k)].middleRows(off, ni) *
                    sol.beta_hat.segment(p_off[static_cast<std::size_t>(k)], sys.p(k)) -
                sys.z_scaled[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] *
                    mu_i.segment(t_off[static_cast<std::size_t>(k)], tk);
            r += res.squaredNorm();
        }
        r += sys.sigma_prod * (sys.sigma_u.inverse_factor_block * mu_i).squaredNorm();
    }
    sol.r_value = r;
    return sol;
}

// ----- criteria ------------------------------------------------------------------

double ml_deviance(const ScaledSystem& sys, const ProfiledSolution& sol) {
    const double N = sys.n_obs();
    const double q = sys.q();
    return sol.r_value / sys.sigma_prod + N * sys.sum_log_sigma_sq -
           q * std::log(sys.sigma_prod) + sys.sigma_u.log_det + sol.logdet_L_sq;
}

double reml_criterion(const ScaledSystem& sys, const ProfiledSolution& sol) {
    const double N = sys.n_obs();
    const double q = sys.q();
    const double p = sys.p_total();
    return sol.r_value / sys.sigma_prod + N * sys.sum_log_sigma_sq -
           (q + p) * std::log(sys.sigma_prod) + sys.sigma_u.log_det + sol.logdet_L_sq +
           sol.logdet_RX_sq;
}

double ml_deviance(const GroupedBivariateData& data, const VarianceParams& params) {
    ScaledSystem sys = build_scaled_system(data, params);
    return ml_deviance(sys, profiled_solve(sys));
}

double reml_criterion(const GroupedBivariateData& data, const VarianceParams& params) {
    ScaledSystem sys = build_scaled_system(data, params);
    return reml_criterion(sys, profiled_solve(sys));
}

double loglik(const GroupedBivariateData& data, const FixedEffects& beta,
              const VarianceParams& params) {
    ScaledSystem sys = build_scaled_system(data, params);
    ProfiledSolution sol = profiled_solve(sys);
    const int p1 = data.p(0);
    const int p2 = data.p(1);
    if (beta.beta1.size() != p1 || beta.beta2.size() != p2) {
        throw ShapeError("beta lengths do not match the fixed designs");
    }
    Eigen::VectorXd b(p1 + p2);
    b << beta.beta1, beta.beta2;
    const double quad = (sol.r_x.triangularView<Eigen::Upper>() * (b - sol.beta_hat)).squaredNorm();
    const double N = sys.n_obs();
    const double q = sys.q();
    return -(sol.r_value + quad) / (2.0 * sys.sigma_prod) -
           0.5 * (N * sys.sum_log_sigma_sq - q * std::log(sys.sigma_prod)) -
           0.5 * sys.sigma_u.log_det - 0.5 * sol.logdet_L_sq -
           0.5 * sys.n_dims() * N * std::log(2.0 * kPi);
}

// ----- dense oracle ----------------------------------------------------------------

double direct_mvn_loglik(const GroupedBivariateData& data, const FixedEffects& beta,
                         const VarianceParams& params) {
    params.validate();
    const int N = data.n_obs();
    if (2 * N > 500) throw ShapeError("direct_mvn_loglik is limited to 2N <= 500");
    if (params.t1() != data.t(0) || params.t2() != data.t(1)) {
        throw ShapeError("theta lengths do not match the data's random-effect term counts");
    }
    const int n = data.n_groups();
    const int q1 = data.q(0);
    const int q2 = data.q(1);
    const int q = q1 + q2;
    const double s1 = params.sigma1;
    const double s2 = params.sigma2;

    // Dimension-major Sigma_u with the block-diagonal cross-correlation.
    Eigen::MatrixXd su = Eigen::MatrixXd::Zero(q, q);
    su.topLeftCorner(q1, q1) = s1 * s1 * Eigen::MatrixXd::Identity(q1, q1);
    su.bottomRightCorner(q2, q2) = s2 * s2 * Eigen::MatrixXd::Identity(q2, q2);
    for (int i = 0; i < n; ++i) {
        su.block(i * data.t(0), q1 + i * data.t(1), data.t(0), data.t(1)) = s1 * s2 * params.rho;
    }
    su.bottomLeftCorner(q2, q1) = su.topRightCorner(q1, q2).transpose();

    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(q, q);
    lambda.topLeftCorner(q1, q1) = build_lambda(params.theta1, data.t(0), n).dense();
    lambda.bottomRightCorner(q2, q2) = build_lambda(params.theta2, data.t(1), n).dense();
    Eigen::MatrixXd gamma = lambda * su * lambda.transpose();

    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2 * N, q);
    z.topLeftCorner(N, q1) = data.dense_z(0);
    z.bottomRightCorner(N, q2) = data.dense_z(1);

    Eigen::MatrixXd v = z * gamma * z.transpose();
    v.topLeftCorner(N, N) += s1 * s1 * Eigen::MatrixXd::Identity(N, N);
    v.bottomRightCorner(N, N) += s2 * s2 * Eigen::MatrixXd::Identity(N, N);

    Eigen::VectorXd resid(2 * N);
    resid.head(N) = data.dims[0].y - data.dims[0].X * beta.beta1;
    resid.tail(N) = data.dims[1].y - data.dims[1].X * beta.beta2;

    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (v + v.transpose()));
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite(-1, "marginal covariance is not positive definite");
    }
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double quad = resid.dot(llt.solve(resid));
    return -0.5 * (quad + logdet + 2.0 * N * std::log(2.0 * kPi));
}

}  // namespace mvlme
