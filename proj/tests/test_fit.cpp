#include <doctest.h>

#include <mvlme/fit.hpp>
#include <mvlme/simulate.hpp>

#include "helpers.hpp"

using namespace mvlme;

TEST_CASE("pack/unpack: round trip and sigma log mapping") {
    VarianceParams p;
    p.theta1 = (Eigen::VectorXd(3) << 1.2, -0.3, 0.8).finished();
    p.theta2 = Eigen::VectorXd::Constant(1, 0.5);
    p.rho = (Eigen::MatrixXd(2, 1) << 0.1, -0.2).finished();
    p.sigma1 = p.sigma2 = 1.0;
    Eigen::VectorXd v = pack(p);
    CHECK(v(v.size() - 2) == 0.0);  // log sigma components vanish at sigma = 1
    CHECK(v(v.size() - 1) == 0.0);

    RngStream rng(314);
    for (int i = 0; i < 100; ++i) {
        VarianceParams q = oracle::random_params(rng, 2, 2);
        VarianceParams back = unpack(pack(q), 2, 2);
        CHECK(back.theta1 == q.theta1);
        CHECK(back.theta2 == q.theta2);
        CHECK(back.rho == q.rho);
        CHECK(back.sigma1 == doctest::Approx(q.sigma1).epsilon(1e-15));
        CHECK(back.sigma2 == doctest::Approx(q.sigma2).epsilon(1e-15));
    }
}

TEST_CASE("objective: feasible points are finite, infeasible rho hits the barrier") {
    oracle::Instance inst = oracle::make_instance(61, {3, 2, 3, 1, 1, 2, 2});
    Eigen::VectorXd v = pack(inst.params);
    const double val = objective(v, inst.data, FitCriterion::ml);
    CHECK(std::isfinite(val));
    CHECK(val < kInfeasibleObjective);
    CHECK(val == doctest::Approx(ml_deviance(inst.data, inst.params)).epsilon(1e-14));
    CHECK(objective(v, inst.data, FitCriterion::reml) ==
          doctest::Approx(reml_criterion(inst.data, inst.params)).epsilon(1e-14));

    // rho entry 1.5: the implied Sigma_u block is infeasible
    VarianceParams bad = inst.params;
    bad.rho(0, 0) = 1.5;
    CHECK(objective(pack(bad), inst.data, FitCriterion::ml) == kInfeasibleObjective);
}

TEST_CASE("naive_init: feasible, deterministic, and within the documented bounds") {
    RngStream a(1), b(1), c(2);
    VarianceParams p1 = naive_init(2, 2, a);
    VarianceParams p2 = naive_init(2, 2, b);
    VarianceParams p3 = naive_init(2, 2, c);
    CHECK(p1.theta1 == p2.theta1);  // deterministic under the same seed
    CHECK(p1.sigma1 == p2.sigma1);
    CHECK(p1.theta1 != p3.theta1);  // distinct seeds give distinct draws
    for (const VarianceParams* p : {&p1, &p3}) {
        CHECK_NOTHROW(assemble_sigma_u(*p, 3));
    }

    RngStream rng(77);
    for (int i = 0; i < 10000; ++i) {
        VarianceParams p = naive_init(2, 2, rng);
        CHECK(p.theta1(0) >= 0.5);
        CHECK(p.theta1(0) <= 2.0);
        CHECK(std::abs(p.theta1(1)) <= 0.5);  // off-diagonal position
        CHECK(p.rho.cwiseAbs().maxCoeff() <= 0.3);
        CHECK(p.sigma1 >= 0.5);
        CHECK(p.sigma1 <= 10.0);
        CHECK(p.sigma2 <= 10.0);
    }
}

TEST_CASE("fit: descent, determinism, and profiling exactness") {
    oracle::Instance inst = oracle::make_instance(202, {4, 3, 5, 2, 2, 2, 2});
    FitOptions opts;
    opts.rng_seed = 9;
    RngStream rng(5);
    VarianceParams init = naive_init(2, 2, rng);

    FitResult fr = fit(inst.data, init, opts);
    CHECK(fr.criterion_value <= objective(pack(init), inst.data, FitCriterion::ml));
    CHECK(fr.converged);
    CHECK(fr.criterion_value ==
          doctest::Approx(ml_deviance(inst.data, fr.params)).epsilon(1e-10));
    CHECK(fr.gamma_bar.isApprox(assemble_gamma_bar(fr.params), 1e-14));
    CHECK(fr.init_used == pack(init));

    // bitwise determinism
    FitResult fr2 = fit(inst.data, init, opts);
    CHECK(fr2.criterion_value == fr.criterion_value);
    CHECK(fr2.params.theta1 == fr.params.theta1);
    CHECK(fr2.beta.beta1 == fr.beta.beta1);
    CHECK(fr2.iterations == fr.iterations);

    // beta equals the GLS solution at the fitted variance parameters
    const Eigen::VectorXd gls = oracle::gls_beta(inst.data, fr.params);
    Eigen::VectorXd ours(inst.data.p_total());
    ours << fr.beta.beta1, fr.beta.beta2;
    CHECK((ours - gls).norm() <= 1e-6 * (1.0 + gls.norm()));
}

TEST_CASE("fit: restarts report the best criterion and stay deterministic") {
    oracle::Instance inst = oracle::make_instance(404, {3, 3, 4, 1, 1, 2, 2});
    RngStream rng(8);
    VarianceParams init = naive_init(1, 1, rng);

    FitOptions single;
    single.rng_seed = 31;
    FitResult one = fit(inst.data, init, single);

    FitOptions multi = single;
    multi.n_restarts = 3;
    FitResult many = fit(inst.data, init, multi);
    CHECK(many.criterion_value <= one.criterion_value + 1e-12);

    FitResult many2 = fit(inst.data, init, multi);
    CHECK(many2.criterion_value == many.criterion_value);
}

TEST_CASE("fit: infeasible start raises InitError") {
    oracle::Instance inst = oracle::make_instance(17, {2, 2, 3, 1, 1, 1, 1});
    VarianceParams bad = inst.params;
    bad.rho(0, 0) = 1.5;
    CHECK_THROWS_AS(fit(inst.data, bad, FitOptions{}), InitError);
}

TEST_CASE("fit: multi-start agreement and the random-search oracle on a tiny instance") {
    oracle::Instance inst = oracle::make_instance(606, {4, 10, 10, 1, 1, 2, 2});  // N = 40, n = 4
    FitOptions opts;
    std::vector<double> values;
    double best_fit = std::numeric_limits<double>::infinity();
    for (std::uint64_t s = 0; s < 5; ++s) {
        RngStream rng(900 + s);
        VarianceParams init = naive_init(1, 1, rng);
        opts.rng_seed = s;
        FitResult fr = fit(inst.data, init, opts);
        values.push_back(fr.criterion_value);
        best_fit = std::min(best_fit, fr.criterion_value);
    }
    for (double v : values) CHECK(v <= best_fit + 1e-4);

    // 1e5-point random search cannot beat the fitted minimum by more than 1e-3
    RngStream rng(4242);
    double best_rs = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100000; ++i) {
        VarianceParams p = naive_init(1, 1, rng);
        const double v = objective(pack(p), inst.data, FitCriterion::ml);
        best_rs = std::min(best_rs, v);
    }
    CHECK(best_fit <= best_rs + 1e-3);
}

TEST_CASE("fit_marginal and advised_init") {
    SimConfig config = default_config();
    config.n_total = 3000;
    config.n_groups = 300;
    config.seed = 77;
    GroupedBivariateData data = simulate(config);

    FitOptions opts;
    VarianceParams init = advised_init(data, opts);
    CHECK(init.rho.isZero(0.0));  // rho component is exactly zero
    // marginal sigma estimates land within 10% of the truth at N = 3000
    CHECK(std::abs(init.sigma1 - config.sigma1) <= 0.1 * config.sigma1);
    CHECK(std::abs(init.sigma2 - config.sigma2) <= 0.1 * config.sigma2);
}

TEST_CASE("advised init needs fewer objective evaluations than naive on average") {
    SimConfig config = default_config();
    config.n_total = 400;
    config.n_groups = 40;
    double naive_total = 0.0, advised_total = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        config.seed = 5000 + s;
        GroupedBivariateData data = simulate(config);
        FitOptions opts;
        opts.rng_seed = s;
        RngStream rng(derive_seed(7777, s));
        FitResult fn = fit(data, naive_init(2, 2, rng), opts);
        FitResult fa = fit(data, advised_init(data, opts), opts);
        naive_total += fn.iterations;
        advised_total += fa.iterations;
    }
    CHECK(advised_total < naive_total);
}
