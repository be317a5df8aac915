#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvlme {

// ----- errors --------------------------------------------------------------

/// Parameter vectors or data matrices do not match the model layout.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A matrix that must be positive definite failed its Cholesky factorization.
/// pivot_index is the zero-based row of the failing pivot.
struct NotPositiveDefinite : std::runtime_error {
    NotPositiveDefinite(int pivot, const std::string& what_arg)
        : std::runtime_error(what_arg), pivot_index(pivot) {}
    int pivot_index;
};

/// The fixed-effects block of the normal equations is numerically singular.
struct RankDeficientFixedDesign : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A per-group marginal covariance could not be factorized during EM.
struct EmNumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The optimizer could not evaluate the objective at the starting point.
struct InitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// CSV or model-spec ingestion failure. row is 1-based (first data row is 1),
/// zero when not tied to a specific row.
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& what_arg)
        : std::runtime_error(what_arg) {}
    LoadError(int row_arg, const std::string& column_arg, const std::string& what_arg)
        : std::runtime_error(what_arg), row(row_arg), column(column_arg) {}
    int row = 0;
    std::string column;
};

// ----- parameters -----------------------------------------------------------

/// Variance components of the bivariate model: the packed lower triangles of
/// the per-group relative covariance factor blocks, the per-group
/// cross-correlation block rho, and the two marginal residual standard
/// deviations. theta entries are free in sign; only lambda lambda^T enters
/// the likelihood.
struct VarianceParams {
    Eigen::VectorXd theta1;  ///< length t1(t1+1)/2, column-major lower triangle
    Eigen::VectorXd theta2;  ///< length t2(t2+1)/2
    Eigen::MatrixXd rho;     ///< t1 x t2
    double sigma1 = 1.0;
    double sigma2 = 1.0;

    int t1() const;
    int t2() const;
    /// Throws ShapeError if the packed lengths, rho shape, or sigmas are invalid.
    void validate() const;
};

struct FixedEffects {
    Eigen::VectorXd beta1;
    Eigen::VectorXd beta2;
};

// ----- grouped data ----------------------------------------------------------

/// One response dimension: response vector, fixed-effects design, and the
/// random-effects design stored as per-group row blocks (row r of the logical
/// N x q matrix Z is zero outside the t columns of r's group).
struct DimensionDesign {
    Eigen::VectorXd y;               ///< length N
    Eigen::MatrixXd X;               ///< N x p
    std::vector<Eigen::MatrixXd> Z;  ///< per group, n_i x t
    int t = 0;
};

/// Bivariate grouped data. Rows are stored group-contiguously; both
/// dimensions share the grouping and the row order.
struct GroupedBivariateData {
    std::vector<int> group_sizes;    ///< n_i, all >= 1
    std::vector<int> group_offsets;  ///< first row of each group
    std::vector<int> group_index;    ///< row -> group
    std::array<DimensionDesign, 2> dims;

    int n_groups() const { return static_cast<int>(group_sizes.size()); }
    int n_obs() const;  ///< N
    int t(int k) const { return dims[static_cast<std::size_t>(k)].t; }
    int p(int k) const { return static_cast<int>(dims[static_cast<std::size_t>(k)].X.cols()); }
    int q(int k) const { return n_groups() * t(k); }
    int p_total() const { return p(0) + p(1); }
    int q_total() const { return q(0) + q(1); }

    /// Materializes dimension k's random-effects design as a dense N x q_k
    /// matrix. Intended for tests and the dense oracle, not the fit path.
    Eigen::MatrixXd dense_z(int k) const;

    /// Recomputes group_offsets/group_index from group_sizes.
    void rebuild_indexing();

    /// Checks all structural invariants, including full column rank of each
    /// fixed design. Throws ShapeError on violation.
    void validate() const;
};

}  // namespace mvlme
