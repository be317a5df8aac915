#include "mvlme/types.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace mvlme {

namespace {

// Side length of a packed lower triangle, or -1 when len is not triangular.
int triangle_dim(Eigen::Index len) {
    int t = static_cast<int>((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0 + 0.5);
    if (static_cast<Eigen::Index>(t) * (t + 1) / 2 != len) return -1;
    return t;
}

}  // namespace

int VarianceParams::t1() const {
    int t = triangle_dim(theta1.size());
    if (t <= 0) throw ShapeError("theta1 length is not a triangular number");
    return t;
}

int VarianceParams::t2() const {
    int t = triangle_dim(theta2.size());
    if (t <= 0) throw ShapeError("theta2 length is not a triangular number");
    return t;
}

void VarianceParams::validate() const {
    int a = t1();
    int b = t2();
    if (rho.rows() != a || rho.cols() != b) {
        std::ostringstream msg;
        msg << "rho must be " << a << "x" << b << ", got " << rho.rows() << "x" << rho.cols();
        throw ShapeError(msg.str());
    }
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw ShapeError("sigma1 and sigma2 must be positive");
    if (!theta1.allFinite() || !theta2.allFinite() || !rho.allFinite() ||
        !std::isfinite(sigma1) || !std::isfinite(sigma2)) {
        throw ShapeError("variance parameters must be finite");
    }
}

int GroupedBivariateData::n_obs() const {
    return std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
}

Eigen::MatrixXd GroupedBivariateData::dense_z(int k) const {
    const DimensionDesign& d = dims[static_cast<std::size_t>(k)];
    const int N = n_obs();
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(N, q(k));
    for (int i = 0; i < n_groups(); ++i) {
        z.block(group_offsets[static_cast<std::size_t>(i)], i * d.t,
                group_sizes[static_cast<std::size_t>(i)], d.t) =
            d.Z[static_cast<std::size_t>(i)];
    }
    return z;
}

void GroupedBivariateData::rebuild_indexing() {
    group_offsets.resize(group_sizes.size());
    int off = 0;
    for (std::size_t i = 0; i < group_sizes.size(); ++i) {
        group_offsets[i] = off;
        off += group_sizes[i];
    }
    group_index.resize(static_cast<std::size_t>(off));
    for (std::size_t i = 0; i < group_sizes.size(); ++i) {
        for (int r = 0; r < group_sizes[i]; ++r) {
            group_index[static_cast<std::size_t>(group_offsets[i] + r)] = static_cast<int>(i);
        }
    }
}

void GroupedBivariateData::validate() const {
    const int n = n_groups();
    if (n < 1) throw ShapeError("at least one group is required");
    for (int s : group_sizes) {
        if (s < 1) throw ShapeError("every group must have at least one observation");
    }
    const int N = n_obs();
    if (static_cast<int>(group_index.size()) != N || static_cast<int>(group_offsets.size()) != n) {
        throw ShapeError("group indexing is inconsistent with group_sizes");
    }
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < group_sizes[static_cast<std::size_t>(i)]; ++r) {
            if (group_index[static_cast<std::size_t>(group_offsets[static_cast<std::size_t>(i)] + r)] != i) {
                throw ShapeError("group_index does not match group_offsets");
            }
        }
    }
    for (int k = 0; k < 2; ++k) {
        const DimensionDesign& d = dims[static_cast<std::size_t>(k)];
        const std::string tag = "dimension " + std::to_string(k + 1);
        if (d.t < 1) throw ShapeError(tag + ": at least one random-effect term is required");
        if (d.X.cols() < 1) throw ShapeError(tag + ": at least one fixed-effect column is required");
        if (d.y.size() != N) throw ShapeError(tag + ": response length does not match N");
        if (d.X.rows() != N) throw ShapeError(tag + ": fixed design rows do not match N");
        if (static_cast<int>(d.Z.size()) != n) {
            throw ShapeError(tag + ": random design must have one block per group");
        }
        for (int i = 0; i < n; ++i) {
            const Eigen::MatrixXd& zb = d.Z[static_cast<std::size_t>(i)];
            if (zb.rows() != group_sizes[static_cast<std::size_t>(i)] || zb.cols() != d.t) {
                throw ShapeError(tag + ": random design block shape mismatch in group " +
                                 std::to_string(i));
            }
        }
        if (!d.y.allFinite() || !d.X.allFinite()) {
            throw ShapeError(tag + ": non-finite values in the data");
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.X);
        if (qr.rank() < d.X.cols()) {
            throw ShapeError(tag + ": fixed design is rank deficient");
        }
    }
}

}  // namespace mvlme
