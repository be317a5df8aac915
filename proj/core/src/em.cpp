#include "mvlme/em.hpp"

#include <cmath>

#include "mvlme/model.hpp"
#include "mvlme/rng.hpp"

namespace mvlme {

void EmOptions::validate() const {
    if (!(tol > 0.0)) throw ShapeError("EM tol must be positive");
    if (max_iter < 1) throw ShapeError("EM max_iter must be positive");
}

namespace {

// Per-group stacked blocks (both dimensions) reused across sweeps.
struct GroupViews {
    Eigen::MatrixXd zbar;   // 2 n_i x (t1+t2), block diagonal over dimensions
    Eigen::MatrixXd xbar;   // 2 n_i x (p1+p2)
    Eigen::VectorXd ybar;   // 2 n_i
    int ni = 0;
};

std::vector<GroupViews> stack_groups(const GroupedBivariateData& data) {
    const int n = data.n_groups();
    const int t1 = data.t(0), t2 = data.t(1);
    const int p1 = data.p(0), p2 = data.p(1);
    std::vector<GroupViews> gv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int off = data.group_offsets[static_cast<std::size_t>(i)];
        const int ni = data.group_sizes[static_cast<std::size_t>(i)];
        GroupViews& g = gv[static_cast<std::size_t>(i)];
        g.ni = ni;
        g.zbar = Eigen::MatrixXd::Zero(2 * ni, t1 + t2);
        g.zbar.topLeftCorner(ni, t1) = data.dims[0].Z[static_cast<std::size_t>(i)];
        g.zbar.bottomRightCorner(ni, t2) = data.dims[1].Z[static_cast<std::size_t>(i)];
        g.xbar = Eigen::MatrixXd::Zero(2 * ni, p1 + p2);
        g.xbar.topLeftCorner(ni, p1) = data.dims[0].X.middleRows(off, ni);
        g.xbar.bottomRightCorner(ni, p2) = data.dims[1].X.middleRows(off, ni);
        g.ybar.resize(2 * ni);
        g.ybar.head(ni) = data.dims[0].y.segment(off, ni);
        g.ybar.tail(ni) = data.dims[1].y.segment(off, ni);
    }
    return gv;
}

double group_loglik(const GroupViews& g, const Eigen::VectorXd& beta_stacked,
                    const Eigen::MatrixXd& gamma_bar, double s1sq, double s2sq) {
    const int ni = g.ni;
    Eigen::MatrixXd v = g.zbar * gamma_bar * g.zbar.transpose();
    v.diagonal().head(ni).array() += s1sq;
    v.diagonal().tail(ni).array() += s2sq;
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) {
        throw EmNumericalError("per-group marginal covariance is not positive definite");
    }
    Eigen::VectorXd resid = g.ybar - g.xbar * beta_stacked;
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (resid.dot(llt.solve(resid)) + logdet + 2.0 * ni * std::log(2.0 * kPi));
}

}  // namespace

double em_marginal_loglik(const GroupedBivariateData& data, const FixedEffects& beta,
                          const Eigen::MatrixXd& gamma_bar, double sigma1, double sigma2) {
    const auto gv = stack_groups(data);
    Eigen::VectorXd b(data.p_total());
    b << beta.beta1, beta.beta2;
    double ll = 0.0;
    for (const auto& g : gv) {
        ll += group_loglik(g, b, gamma_bar, sigma1 * sigma1, sigma2 * sigma2);
    }
    return ll;
}

EmMoments em_estep(const GroupedBivariateData& data, const FixedEffects& beta,
                   const Eigen::MatrixXd& gamma_bar, double sigma1, double sigma2) {
    const auto gv = stack_groups(data);
    Eigen::VectorXd b(data.p_total());
    b << beta.beta1, beta.beta2;
    const double s1sq = sigma1 * sigma1;
    const double s2sq = sigma2 * sigma2;
    EmMoments out;
    out.m.reserve(gv.size());
    out.c.reserve(gv.size());
    for (const auto& g : gv) {
        Eigen::MatrixXd v = g.zbar * gamma_bar * g.zbar.transpose();
        v.diagonal().head(g.ni).array() += s1sq;
        v.diagonal().tail(g.ni).array() += s2sq;
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) {
            throw EmNumericalError("per-group marginal covariance is not positive definite");
        }
        Eigen::MatrixXd gz = gamma_bar * g.zbar.transpose();
        Eigen::VectorXd resid = g.ybar - g.xbar * b;
        out.m.push_back(gz * llt.solve(resid));
        Eigen::MatrixXd ci = gamma_bar - gz * llt.solve(gz.transpose());
        out.c.push_back(0.5 * (ci + ci.transpose()));
    }
    return out;
}

EmFit em_fit(const GroupedBivariateData& data, const EmInit& init, const EmOptions& options) {
    options.validate();
    const int n = data.n_groups();
    const int N = data.n_obs();
    const int T = data.t(0) + data.t(1);
    const int p1 = data.p(0), p2 = data.p(1);
    if (init.beta.beta1.size() != p1 || init.beta.beta2.size() != p2) {
        throw ShapeError("EM init beta lengths do not match the fixed designs");
    }
    if (init.gamma_bar.rows() != T || init.gamma_bar.cols() != T) {
        throw ShapeError("EM init gamma_bar must be (t1+t2) square");
    }
    if (!(init.sigma1 > 0.0) || !(init.sigma2 > 0.0)) {
        throw ShapeError("EM init sigmas must be positive");
    }
    try {
        cholesky_lower(init.gamma_bar);
    } catch (const NotPositiveDefinite&) {
        throw InitError("EM init gamma_bar is not positive definite");
    }

    const auto gv = stack_groups(data);
    // Fixed-effects Gram factors are parameter free.
    Eigen::LLT<Eigen::MatrixXd> xtx1(data.dims[0].X.transpose() * data.dims[0].X);
    Eigen::LLT<Eigen::MatrixXd> xtx2(data.dims[1].X.transpose() * data.dims[1].X);

    Eigen::VectorXd beta(p1 + p2);
    beta << init.beta.beta1, init.beta.beta2;
    Eigen::MatrixXd gamma = init.gamma_bar;
    double s1sq = init.sigma1 * init.sigma1;
    double s2sq = init.sigma2 * init.sigma2;

    EmFit out;
    out.initial_loglik = 0.0;
    for (const auto& g : gv) out.initial_loglik += group_loglik(g, beta, gamma, s1sq, s2sq);

    std::vector<Eigen::VectorXd> m(static_cast<std::size_t>(n));
    std::vector<Eigen::MatrixXd> c(static_cast<std::size_t>(n));

    double prev_ll = out.initial_loglik;
    for (int sweep = 0; sweep < options.max_iter; ++sweep) {
        // E-step: conditional moments of gamma_i given y_i.
        for (int i = 0; i < n; ++i) {
            const GroupViews& g = gv[static_cast<std::size_t>(i)];
            Eigen::MatrixXd v = g.zbar * gamma * g.zbar.transpose();
            v.diagonal().head(g.ni).array() += s1sq;
            v.diagonal().tail(g.ni).array() += s2sq;
            Eigen::LLT<Eigen::MatrixXd> llt(v);
            if (llt.info() != Eigen::Success) {
                throw EmNumericalError("per-group marginal covariance is not positive definite");
            }
            Eigen::MatrixXd gz = gamma * g.zbar.transpose();  // T x 2n_i
            Eigen::VectorXd resid = g.ybar - g.xbar * beta;
            m[static_cast<std::size_t>(i)] = gz * llt.solve(resid);
            Eigen::MatrixXd ci = gamma - gz * llt.solve(gz.transpose());
            c[static_cast<std::size_t>(i)] = 0.5 * (ci + ci.transpose());
        }

        // M-step. beta decouples per dimension: least squares on y - Z E[gamma].
        Eigen::VectorXd adj1 = data.dims[0].y;
        Eigen::VectorXd adj2 = data.dims[1].y;
        for (int i = 0; i < n; ++i) {
            const int off = data.group_offsets[static_cast<std::size_t>(i)];
            const int ni = data.group_sizes[static_cast<std::size_t>(i)];
            adj1.segment(off, ni) -=
                data.dims[0].Z[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)].head(data.t(0));
            adj2.segment(off, ni) -=
                data.dims[1].Z[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)].tail(data.t(1));
        }
        beta.head(p1) = xtx1.solve(data.dims[0].X.transpose() * adj1);
        beta.tail(p2) = xtx2.solve(data.dims[1].X.transpose() * adj2);

        // sigma_k^2 and gamma_bar from the expected complete-data sums.
        double rss1 = 0.0, rss2 = 0.0;
        Eigen::MatrixXd gsum = Eigen::MatrixXd::Zero(T, T);
        for (int i = 0; i < n; ++i) {
            const int off = data.group_offsets[static_cast<std::size_t>(i)];
            const int ni = data.group_sizes[static_cast<std::size_t>(i)];
            const Eigen::VectorXd& mi = m[static_cast<std::size_t>(i)];
            const Eigen::MatrixXd& ci = c[static_cast<std::size_t>(i)];
            const auto& z1 = data.dims[0].Z[static_cast<std::size_t>(i)];
            const auto& z2 = data.dims[1].Z[static_cast<std::size_t>(i)];

            Eigen::VectorXd r1 = data.dims[0].y.segment(off, ni) -
                                 data.dims[0].X.middleRows(off, ni) * beta.head(p1) -
                                 z1 * mi.head(data.t(0));
            Eigen::VectorXd r2 = data.dims[1].y.segment(off, ni) -
                                 data.dims[1].X.middleRows(off, ni) * beta.tail(p2) -
                                 z2 * mi.tail(data.t(1));
            // tr(Z C Z^T) via sum((Z C) o Z)
            const Eigen::MatrixXd c11 = ci.topLeftCorner(data.t(0), data.t(0));
            const Eigen::MatrixXd c22 = ci.bottomRightCorner(data.t(1), data.t(1));
            rss1 += r1.squaredNorm() + (z1 * c11).cwiseProduct(z1).sum();
            rss2 += r2.squaredNorm() + (z2 * c22).cwiseProduct(z2).sum();
            gsum.noalias() += mi * mi.transpose();
            gsum += ci;
        }
        s1sq = rss1 / N;
        s2sq = rss2 / N;
        if (!(s1sq > 0.0) || !(s2sq > 0.0) || !std::isfinite(s1sq) || !std::isfinite(s2sq)) {
            throw EmNumericalError("residual variance collapsed during EM");
        }
        gamma = gsum / n;
        gamma = (0.5 * (gamma + gamma.transpose())).eval();

        out.iterations = sweep + 1;
        double ll = 0.0;
        for (const auto& g : gv) ll += group_loglik(g, beta, gamma, s1sq, s2sq);
        out.loglik_trace.push_back(ll);
        if (std::abs(ll - prev_ll) <= options.tol * (std::abs(prev_ll) + options.tol)) {
            out.converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }

    out.beta.beta1 = beta.head(p1);
    out.beta.beta2 = beta.tail(p2);
    out.gamma_bar = gamma;
    out.sigma1 = std::sqrt(s1sq);
    out.sigma2 = std::sqrt(s2sq);
    out.params =
        variance_params_from_gamma_bar(gamma, data.t(0), data.t(1), out.sigma1, out.sigma2);
    return out;
}

}  // namespace mvlme
