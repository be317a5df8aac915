#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <mvlme/deviance.hpp>
#include <mvlme/model.hpp>
#include <mvlme/rng.hpp>
#include <mvlme/types.hpp>

// Test-only oracles. Everything here assembles the model objects densely from
// their definitions, independent of the block-structured fit path.
namespace oracle {

struct InstanceShape {
    int n_groups = 3;
    int ni_min = 2, ni_max = 4;
    int t1 = 2, t2 = 2;
    int p1 = 2, p2 = 2;
};

struct Instance {
    mvlme::GroupedBivariateData data;
    mvlme::VarianceParams params;  // parameters the responses were drawn from
    mvlme::FixedEffects beta;
};

inline mvlme::VarianceParams random_params(mvlme::RngStream& rng, int t1, int t2) {
    mvlme::VarianceParams p;
    auto draw_theta = [&](int t) {
        Eigen::VectorXd th(t * (t + 1) / 2);
        int idx = 0;
        for (int col = 0; col < t; ++col) {
            for (int row = col; row < t; ++row) {
                th(idx++) = (row == col) ? rng.uniform(0.5, 1.5) : rng.uniform(-0.4, 0.4);
            }
        }
        return th;
    };
    p.theta1 = draw_theta(t1);
    p.theta2 = draw_theta(t2);
    p.rho.resize(t1, t2);
    for (int c = 0; c < t2; ++c) {
        for (int r = 0; r < t1; ++r) p.rho(r, c) = rng.uniform(-0.4, 0.4);
    }
    const double sv = p.rho.jacobiSvd().singularValues()(0);
    if (sv > 0.8) p.rho *= 0.75 / sv;
    p.sigma1 = rng.uniform(0.5, 2.0);
    p.sigma2 = rng.uniform(0.5, 2.0);
    return p;
}

/// Random instance with responses drawn from the model at `params`.
inline Instance make_instance(std::uint64_t seed, const InstanceShape& shape = {}) {
    mvlme::RngStream rng(seed);
    Instance inst;
    mvlme::GroupedBivariateData& d = inst.data;

    d.group_sizes.resize(static_cast<std::size_t>(shape.n_groups));
    for (auto& s : d.group_sizes) {
        s = shape.ni_min + static_cast<int>(rng.uniform01() * (shape.ni_max - shape.ni_min + 1));
        if (s > shape.ni_max) s = shape.ni_max;
    }
    d.rebuild_indexing();
    const int N = d.n_obs();

    inst.params = random_params(rng, shape.t1, shape.t2);
    inst.beta.beta1.resize(shape.p1);
    inst.beta.beta2.resize(shape.p2);
    for (int j = 0; j < shape.p1; ++j) inst.beta.beta1(j) = rng.uniform(-2.0, 2.0);
    for (int j = 0; j < shape.p2; ++j) inst.beta.beta2(j) = rng.uniform(-2.0, 2.0);

    const Eigen::MatrixXd gamma_bar = mvlme::assemble_gamma_bar(inst.params);
    const Eigen::MatrixXd gchol = mvlme::cholesky_lower(gamma_bar);
    const int ts[2] = {shape.t1, shape.t2};
    const int ps[2] = {shape.p1, shape.p2};

    for (int k = 0; k < 2; ++k) {
        mvlme::DimensionDesign& dim = d.dims[static_cast<std::size_t>(k)];
        dim.t = ts[k];
        dim.y.resize(N);
        dim.X.resize(N, ps[k]);
        dim.Z.resize(static_cast<std::size_t>(shape.n_groups));
    }
    for (int i = 0; i < shape.n_groups; ++i) {
        const int off = d.group_offsets[static_cast<std::size_t>(i)];
        const int ni = d.group_sizes[static_cast<std::size_t>(i)];
        Eigen::VectorXd z4(shape.t1 + shape.t2);
        for (int j = 0; j < z4.size(); ++j) z4(j) = rng.normal();
        const Eigen::VectorXd gamma_i = gchol * z4;
        for (int k = 0; k < 2; ++k) {
            mvlme::DimensionDesign& dim = d.dims[static_cast<std::size_t>(k)];
            Eigen::MatrixXd x(ni, ps[k]);
            for (int r = 0; r < ni; ++r) {
                x(r, 0) = 1.0;
                for (int c = 1; c < ps[k]; ++c) x(r, c) = rng.normal();
            }
            Eigen::MatrixXd zb(ni, ts[k]);
            for (int r = 0; r < ni; ++r) {
                zb(r, 0) = 1.0;
                for (int c = 1; c < ts[k]; ++c) zb(r, c) = rng.normal();
            }
            dim.X.middleRows(off, ni) = x;
            dim.Z[static_cast<std::size_t>(i)] = zb;
            const double sigma = (k == 0) ? inst.params.sigma1 : inst.params.sigma2;
            const Eigen::VectorXd beta = (k == 0) ? inst.beta.beta1 : inst.beta.beta2;
            const Eigen::VectorXd g_part = gamma_i.segment(k == 0 ? 0 : shape.t1, ts[k]);
            for (int r = 0; r < ni; ++r) {
                dim.y(off + r) =
                    x.row(r).dot(beta) + zb.row(r).dot(g_part) + sigma * rng.normal();
            }
        }
    }
    d.validate();
    return inst;
}

// ----- dense assemblies ------------------------------------------------------------

/// Dimension-major Sigma_u assembled entry by entry from the definition.
inline Eigen::MatrixXd dense_sigma_u(const mvlme::VarianceParams& p, int n) {
    const int t1 = p.t1(), t2 = p.t2();
    const int q1 = n * t1, q2 = n * t2;
    Eigen::MatrixXd su = Eigen::MatrixXd::Zero(q1 + q2, q1 + q2);
    su.topLeftCorner(q1, q1) = p.sigma1 * p.sigma1 * Eigen::MatrixXd::Identity(q1, q1);
    su.bottomRightCorner(q2, q2) = p.sigma2 * p.sigma2 * Eigen::MatrixXd::Identity(q2, q2);
    for (int i = 0; i < n; ++i) {
        su.block(i * t1, q1 + i * t2, t1, t2) = p.sigma1 * p.sigma2 * p.rho;
        su.block(q1 + i * t2, i * t1, t2, t1) = p.sigma1 * p.sigma2 * p.rho.transpose();
    }
    return su;
}

/// Dense covariance of gamma (dimension-major): Lambda Sigma_u Lambda^T.
inline Eigen::MatrixXd dense_gamma(const mvlme::VarianceParams& p, int n) {
    const int t1 = p.t1(), t2 = p.t2();
    const int q1 = n * t1, q2 = n * t2;
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(q1 + q2, q1 + q2);
    lambda.topLeftCorner(q1, q1) = mvlme::build_lambda(p.theta1, t1, n).dense();
    lambda.bottomRightCorner(q2, q2) = mvlme::build_lambda(p.theta2, t2, n).dense();
    return lambda * dense_sigma_u(p, n) * lambda.transpose();
}

/// Marginal covariance V of the stacked responses.
inline Eigen::MatrixXd dense_v(const mvlme::GroupedBivariateData& d,
                               const mvlme::VarianceParams& p) {
    const int N = d.n_obs();
    const int q1 = d.q(0), q2 = d.q(1);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2 * N, q1 + q2);
    z.topLeftCorner(N, q1) = d.dense_z(0);
    z.bottomRightCorner(N, q2) = d.dense_z(1);
    Eigen::MatrixXd v = z * dense_gamma(p, d.n_groups()) * z.transpose();
    v.topLeftCorner(N, N) += p.sigma1 * p.sigma1 * Eigen::MatrixXd::Identity(N, N);
    v.bottomRightCorner(N, N) += p.sigma2 * p.sigma2 * Eigen::MatrixXd::Identity(N, N);
    return 0.5 * (v + v.transpose());
}

inline Eigen::MatrixXd stacked_x(const mvlme::GroupedBivariateData& d) {
    const int N = d.n_obs();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2 * N, d.p_total());
    x.topLeftCorner(N, d.p(0)) = d.dims[0].X;
    x.bottomRightCorner(N, d.p(1)) = d.dims[1].X;
    return x;
}

inline Eigen::VectorXd stacked_y(const mvlme::GroupedBivariateData& d) {
    const int N = d.n_obs();
    Eigen::VectorXd y(2 * N);
    y.head(N) = d.dims[0].y;
    y.tail(N) = d.dims[1].y;
    return y;
}

/// MVN log-density via eigendecomposition of V (second, independent path).
inline double mvn_loglik_eig(const mvlme::GroupedBivariateData& d, const mvlme::FixedEffects& b,
                             const mvlme::VarianceParams& p) {
    const Eigen::MatrixXd v = dense_v(d, p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    const Eigen::VectorXd evals = es.eigenvalues();
    Eigen::VectorXd resid = stacked_y(d);
    resid.head(d.n_obs()) -= d.dims[0].X * b.beta1;
    resid.tail(d.n_obs()) -= d.dims[1].X * b.beta2;
    const Eigen::VectorXd w = es.eigenvectors().transpose() * resid;
    double quad = 0.0, logdet = 0.0;
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        quad += w(i) * w(i) / evals(i);
        logdet += std::log(evals(i));
    }
    const double two_n = static_cast<double>(resid.size());
    return -0.5 * (quad + logdet + two_n * std::log(2.0 * mvlme::kPi));
}

/// Generalized-least-squares fixed effects at the given variance parameters.
inline Eigen::VectorXd gls_beta(const mvlme::GroupedBivariateData& d,
                                const mvlme::VarianceParams& p) {
    const Eigen::MatrixXd v = dense_v(d, p);
    const Eigen::MatrixXd x = stacked_x(d);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    const Eigen::MatrixXd vix = llt.solve(x);
    return (x.transpose() * vix).ldlt().solve(vix.transpose() * stacked_y(d));
}

/// ML deviance by the GLS route: (y - X bhat)^T V^{-1} (y - X bhat) + log|V|.
inline double ml_deviance_gls(const mvlme::GroupedBivariateData& d,
                              const mvlme::VarianceParams& p) {
    const Eigen::MatrixXd v = dense_v(d, p);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    const Eigen::VectorXd bhat = gls_beta(d, p);
    Eigen::VectorXd resid = stacked_y(d) - stacked_x(d) * bhat;
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return resid.dot(llt.solve(resid)) + logdet;
}

/// REML criterion by the closed Gaussian integral over beta:
/// quad + log|V| + log|X^T V^{-1} X|.
inline double reml_criterion_gls(const mvlme::GroupedBivariateData& d,
                                 const mvlme::VarianceParams& p) {
    const Eigen::MatrixXd v = dense_v(d, p);
    const Eigen::MatrixXd x = stacked_x(d);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    const Eigen::MatrixXd vix = llt.solve(x);
    const Eigen::MatrixXd xtvix = x.transpose() * vix;
    const Eigen::VectorXd bhat = xtvix.ldlt().solve(vix.transpose() * stacked_y(d));
    Eigen::VectorXd resid = stacked_y(d) - x * bhat;
    const double logdet_v = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double logdet_info =
        2.0 * Eigen::LLT<Eigen::MatrixXd>(xtvix).matrixL().toDenseMatrix().diagonal().array().log().sum();
    return resid.dot(llt.solve(resid)) + logdet_v + logdet_info;
}

}  // namespace oracle
