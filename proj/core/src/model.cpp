#include "mvlme/model.hpp"

#include <cmath>
#include <string>

namespace mvlme {

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    const double max_diag = a.diagonal().maxCoeff();
    const double pivot_floor = 1e-12 * max_diag;
    for (int j = 0; j < n; ++j) {
        double d = a(j, j) - L.row(j).head(j).squaredNorm();
        if (!(d > pivot_floor) || !std::isfinite(d)) {
            throw NotPositiveDefinite(j, "Cholesky pivot " + std::to_string(j) +
                                             " is not positive (value " + std::to_string(d) + ")");
        }
        L(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            L(i, j) = (a(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
        }
    }
    return L;
}

// ----- Lambda ---------------------------------------------------------------

Eigen::MatrixXd LambdaFactor::dense() const {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(dim(), dim());
    for (int i = 0; i < n_groups; ++i) {
        full.block(i * t(), i * t(), t(), t()) = block;
    }
    return full;
}

LambdaFactor build_lambda(const Eigen::VectorXd& theta, int t, int n_groups) {
    if (t < 1 || n_groups < 1) throw ShapeError("build_lambda: t and n_groups must be positive");
    if (theta.size() != static_cast<Eigen::Index>(t) * (t + 1) / 2) {
        throw ShapeError("build_lambda: theta must have length t(t+1)/2");
    }
    LambdaFactor lf;
    lf.n_groups = n_groups;
    lf.block = Eigen::MatrixXd::Zero(t, t);
    int idx = 0;
    for (int col = 0; col < t; ++col) {
        for (int row = col; row < t; ++row) {
            lf.block(row, col) = theta(idx++);
        }
    }
    return lf;
}

Eigen::VectorXd pack_lower_triangle(const Eigen::MatrixXd& m) {
    const int t = static_cast<int>(m.rows());
    Eigen::VectorXd theta(t * (t + 1) / 2);
    int idx = 0;
    for (int col = 0; col < t; ++col) {
        for (int row = col; row < t; ++row) {
            theta(idx++) = m(row, col);
        }
    }
    return theta;
}

// ----- Sigma_u ---------------------------------------------------------------

Eigen::MatrixXd SigmaU::block_inverse() const {
    return inverse_factor_block.transpose() * inverse_factor_block;
}

Eigen::MatrixXd SigmaU::dense() const {
    const int T = block_dim();
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n_groups * T, n_groups * T);
    for (int i = 0; i < n_groups; ++i) {
        full.block(i * T, i * T, T, T) = per_group_block;
    }
    return full;
}

namespace {

SigmaU sigma_u_from_block(Eigen::MatrixXd block, int n_groups) {
    SigmaU su;
    su.n_groups = n_groups;
    su.per_group_block = std::move(block);

    Eigen::MatrixXd L = cholesky_lower(su.per_group_block);
    su.log_det = 2.0 * n_groups * L.diagonal().array().log().sum();

    // block^{-1} via the factor, then its own Cholesky transposed gives the
    // upper-triangular S with S^T S = block^{-1}.
    const int T = static_cast<int>(L.rows());
    Eigen::MatrixXd inv = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(T, T));
    inv = L.transpose().triangularView<Eigen::Upper>().solve(inv);
    inv = (0.5 * (inv + inv.transpose())).eval();
    su.inverse_factor_block = cholesky_lower(inv).transpose();
    return su;
}

}  // namespace

SigmaU assemble_sigma_u(const VarianceParams& params, int n_groups) {
    params.validate();
    if (n_groups < 1) throw ShapeError("assemble_sigma_u: n_groups must be positive");
    const int a = params.t1();
    const int b = params.t2();
    const double s1 = params.sigma1;
    const double s2 = params.sigma2;
    Eigen::MatrixXd block(a + b, a + b);
    block.topLeftCorner(a, a) = s1 * s1 * Eigen::MatrixXd::Identity(a, a);
    block.bottomRightCorner(b, b) = s2 * s2 * Eigen::MatrixXd::Identity(b, b);
    block.topRightCorner(a, b) = s1 * s2 * params.rho;
    block.bottomLeftCorner(b, a) = s1 * s2 * params.rho.transpose();
    return sigma_u_from_block(std::move(block), n_groups);
}

SigmaU marginal_sigma_u(double sigma, int t, int n_groups) {
    if (!(sigma > 0.0)) throw ShapeError("marginal_sigma_u: sigma must be positive");
    SigmaU su;
    su.n_groups = n_groups;
    su.per_group_block = sigma * sigma * Eigen::MatrixXd::Identity(t, t);
    su.inverse_factor_block = (1.0 / sigma) * Eigen::MatrixXd::Identity(t, t);
    su.log_det = 2.0 * n_groups * t * std::log(sigma);
    return su;
}

// ----- gamma_bar ----------------------------------------------------------------

Eigen::MatrixXd assemble_gamma_bar(const VarianceParams& params) {
    params.validate();
    const int a = params.t1();
    const int b = params.t2();
    const Eigen::MatrixXd l1 = build_lambda(params.theta1, a, 1).block;
    const Eigen::MatrixXd l2 = build_lambda(params.theta2, b, 1).block;
    const double s1 = params.sigma1;
    const double s2 = params.sigma2;
    Eigen::MatrixXd g(a + b, a + b);
    g.topLeftCorner(a, a) = s1 * s1 * (l1 * l1.transpose());
    g.bottomRightCorner(b, b) = s2 * s2 * (l2 * l2.transpose());
    g.topRightCorner(a, b) = s1 * s2 * (l1 * params.rho * l2.transpose());
    g.bottomLeftCorner(b, a) = g.topRightCorner(a, b).transpose();
    return 0.5 * (g + g.transpose());
}

std::optional<VarianceParams> variance_params_from_gamma_bar(const Eigen::MatrixXd& gamma_bar,
                                                             int t1, int t2, double sigma1,
                                                             double sigma2) {
    if (gamma_bar.rows() != t1 + t2 || gamma_bar.cols() != t1 + t2) {
        throw ShapeError("gamma_bar shape does not match t1 + t2");
    }
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw ShapeError("sigmas must be positive");
    VarianceParams p;
    p.sigma1 = sigma1;
    p.sigma2 = sigma2;
    try {
        Eigen::MatrixXd l1 = cholesky_lower(gamma_bar.topLeftCorner(t1, t1) / (sigma1 * sigma1));
        Eigen::MatrixXd l2 = cholesky_lower(gamma_bar.bottomRightCorner(t2, t2) / (sigma2 * sigma2));
        Eigen::MatrixXd cross = gamma_bar.topRightCorner(t1, t2) / (sigma1 * sigma2);
        // rho = l1^{-1} cross l2^{-T}
        Eigen::MatrixXd rho = l1.triangularView<Eigen::Lower>().solve(cross);
        rho = l2.triangularView<Eigen::Lower>()
                  .solve(rho.transpose())
                  .transpose()
                  .eval();
        p.theta1 = pack_lower_triangle(l1);
        p.theta2 = pack_lower_triangle(l2);
        p.rho = rho;
        assemble_sigma_u(p, 1);  // feasibility check on the implied block
    } catch (const NotPositiveDefinite&) {
        return std::nullopt;
    }
    return p;
}

std::vector<int> group_major_permutation(int n_groups, int t1, int t2) {
    std::vector<int> perm;
    perm.reserve(static_cast<std::size_t>(n_groups) * (t1 + t2));
    const int q1 = n_groups * t1;
    for (int i = 0; i < n_groups; ++i) {
        for (int j = 0; j < t1; ++j) perm.push_back(i * t1 + j);
        for (int j = 0; j < t2; ++j) perm.push_back(q1 + i * t2 + j);
    }
    return perm;
}

}  // namespace mvlme
