#include <doctest.h>

#include <mvlme/model.hpp>
#include <mvlme/simulate.hpp>

#include <Eigen/Eigenvalues>

using namespace mvlme;

TEST_CASE("default_config carries the working-design true values") {
    SimConfig c = default_config();
    CHECK(c.beta1(0) == 50.67);
    CHECK(c.beta1(1) == -4.80);
    CHECK(c.beta1(2) == 14.00);
    CHECK(c.beta1(3) == 2.70);
    CHECK(c.beta2(0) == 13.20);
    CHECK(c.beta2(2) == 27.00);
    CHECK(c.sigma1 == 5.80);
    CHECK(c.sigma2 == 7.60);
    CHECK(c.gamma_bar(0, 0) == 27.77);
    CHECK(c.gamma_bar(2, 2) == 97.81);
    CHECK(c.gamma_bar(1, 2) == 47.47);
    CHECK(c.gamma_bar.isApprox(c.gamma_bar.transpose()));

    // positive definite; record the smallest eigenvalue
    CHECK_NOTHROW(cholesky_lower(c.gamma_bar));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.gamma_bar);
    INFO("smallest eigenvalue of the default gamma_bar: ", es.eigenvalues()(0));
    CHECK(es.eigenvalues()(0) > 0.0);
}

TEST_CASE("build_gamma_bar: diagonal, boundary, and recovery of the default matrix") {
    GammaBarBuilder diag;
    diag.eta1 = 2.0;
    diag.eta2 = 3.0;
    diag.tau1 = 0.5;
    diag.tau2 = 1.5;
    Eigen::VectorXd d(4);
    d << 4.0, 9.0, 0.25, 2.25;
    CHECK(build_gamma_bar(diag).isApprox(d.asDiagonal().toDenseMatrix(), 1e-14));

    GammaBarBuilder singular;
    singular.rho = 1.0;  // unit cross-correlation is singular
    CHECK_THROWS_AS(build_gamma_bar(singular), BuilderError);

    // inverting the displayed entries reproduces the default matrix within
    // print rounding
    GammaBarBuilder b;
    b.eta1 = std::sqrt(27.77);  // 5.270
    b.eta2 = std::sqrt(36.00);
    b.tau1 = std::sqrt(97.81);
    b.tau2 = std::sqrt(1.37);
    b.rho = 0.8;
    b.rho_eta = 18.80 / (b.eta1 * b.eta2);
    b.rho_tau = 8.91 / (b.tau1 * b.tau2);
    CHECK(b.eta1 == doctest::Approx(5.270).epsilon(1e-3));
    const Eigen::MatrixXd g = build_gamma_bar(b);
    const Eigen::MatrixXd truth = default_config().gamma_bar;
    CHECK((g - truth).cwiseAbs().maxCoeff() <= 0.01);
}

TEST_CASE("simulate: determinism and seed sensitivity") {
    SimConfig c = default_config();
    c.n_total = 120;
    c.n_groups = 11;
    c.seed = 99;
    GroupedBivariateData a = simulate(c);
    GroupedBivariateData b = simulate(c);
    CHECK(a.dims[0].y == b.dims[0].y);
    CHECK(a.dims[1].y == b.dims[1].y);
    CHECK(a.dims[0].X == b.dims[0].X);

    c.seed = 100;
    GroupedBivariateData other = simulate(c);
    CHECK(a.dims[0].y != other.dims[0].y);
}

TEST_CASE("simulate: group-size allocation and structural invariants") {
    SimConfig c = default_config();
    c.n_total = 1003;
    c.n_groups = 10;
    c.seed = 5;
    GroupedBivariateData d = simulate(c);
    CHECK(d.n_obs() == 1003);
    CHECK(d.n_groups() == 10);
    for (int i = 0; i < 3; ++i) CHECK(d.group_sizes[static_cast<std::size_t>(i)] == 101);
    for (int i = 3; i < 10; ++i) CHECK(d.group_sizes[static_cast<std::size_t>(i)] == 100);
    CHECK_NOTHROW(d.validate());

    // sex constant within groups, Nscore and age vary and stay in range
    for (int i = 0; i < d.n_groups(); ++i) {
        const int off = d.group_offsets[static_cast<std::size_t>(i)];
        const int ni = d.group_sizes[static_cast<std::size_t>(i)];
        const auto sex = d.dims[0].X.col(1).segment(off, ni);
        CHECK((sex.array() == sex(0)).all());
        CHECK((sex(0) == 0.0 || sex(0) == 1.0));
        const auto nscore = d.dims[0].X.col(2).segment(off, ni);
        CHECK(nscore.minCoeff() >= c.nscore_min);
        CHECK(nscore.maxCoeff() <= c.nscore_max);
        CHECK(nscore.minCoeff() < nscore.maxCoeff());
        const auto age = d.dims[0].X.col(3).segment(off, ni);
        CHECK(age.minCoeff() >= c.age_min);
        CHECK(age.maxCoeff() <= c.age_max);
        // the random design is (1, Nscore)
        CHECK(d.dims[0].Z[static_cast<std::size_t>(i)].col(0).isOnes());
        CHECK(d.dims[0].Z[static_cast<std::size_t>(i)].col(1).isApprox(nscore));
    }
}

TEST_CASE("simulate: noiseless limit collapses onto the fixed effects") {
    SimConfig c = default_config();
    c.n_total = 60;
    c.n_groups = 6;
    c.sigma1 = c.sigma2 = 1e-30;
    c.gamma_bar = 1e-60 * Eigen::MatrixXd::Identity(4, 4);
    c.seed = 3;
    GroupedBivariateData d = simulate(c);
    CHECK((d.dims[0].y - d.dims[0].X * c.beta1).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((d.dims[1].y - d.dims[1].X * c.beta2).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("simulate: realized random effects match gamma_bar empirically") {
    SimConfig c = default_config();
    c.n_total = 15000;
    c.n_groups = 1000;
    c.seed = 314159;
    SimulatedData sim = simulate_with_effects(c);
    REQUIRE(sim.gamma.rows() == 1000);
    const Eigen::MatrixXd centered = sim.gamma.rowwise() - sim.gamma.colwise().mean();
    const Eigen::MatrixXd emp = centered.transpose() * centered / (sim.gamma.rows() - 1);
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            const double se = std::sqrt((c.gamma_bar(a, a) * c.gamma_bar(b, b) +
                                         c.gamma_bar(a, b) * c.gamma_bar(a, b)) /
                                        sim.gamma.rows());
            CHECK(std::abs(emp(a, b) - c.gamma_bar(a, b)) <= 3.0 * se);
        }
    }
}
