#include <doctest.h>

#include <mvlme/report.hpp>

#include <cstdio>

using namespace mvlme;

TEST_CASE("quantile: linear interpolation between order statistics") {
    std::vector<double> v = {5, 1, 3, 2, 4};
    CHECK(quantile(v, 0.5) == doctest::Approx(3.0));
    CHECK(quantile(v, 0.0) == doctest::Approx(1.0));
    CHECK(quantile(v, 1.0) == doctest::Approx(5.0));
    CHECK(quantile(v, 0.025) == doctest::Approx(1.1));
    CHECK(quantile(v, 0.975) == doctest::Approx(4.9));
}

TEST_CASE("block_sq_errors: absolute and relative statistics") {
    EstimateBundle truth;
    truth.beta1 = (Eigen::VectorXd(2) << 2.0, 4.0).finished();
    truth.beta2 = (Eigen::VectorXd(1) << 1.0).finished();
    truth.sigma1 = 2.0;
    truth.sigma2 = 1.0;
    truth.gamma_bar = Eigen::MatrixXd::Identity(2, 2);
    EstimateBundle est = truth;
    est.beta1(0) = 3.0;   // error 1
    est.sigma1 = 1.0;     // error 1
    est.gamma_bar(0, 0) = 2.0;

    auto abs_err = block_sq_errors(est, truth, false);
    CHECK(abs_err["beta1"] == doctest::Approx(0.5));   // (1 + 0) / 2
    CHECK(abs_err["sigma1"] == doctest::Approx(1.0));
    CHECK(abs_err["gamma_bar"] == doctest::Approx(0.25));  // one entry off by 1 out of 4

    auto rel_err = block_sq_errors(est, truth, true);
    CHECK(rel_err["beta1"] == doctest::Approx(0.25));  // (1/2)^2 + 0, summed
    CHECK(rel_err["sigma1"] == doctest::Approx(0.25));
    // zero off-diagonal truth entries fall back to the absolute term
    CHECK(rel_err["gamma_bar"] == doctest::Approx(1.0));

    auto rel = rel_errors(est, truth);
    CHECK(rel["beta1"](0) == doctest::Approx(0.5));
    CHECK(rel["sigma1"](0) == doctest::Approx(0.5));
}

TEST_CASE("benchmark-mse: records, summaries, serialization round trip") {
    FitOptions opts;
    opts.max_evaluations = 2000;
    ExperimentReport report = run_benchmark_mse({{200, 20}}, 3, 555, opts);
    REQUIRE(report.records.size() == 3);
    for (const auto& rec : report.records) {
        CHECK(rec.method == "profiled");
        CHECK(rec.init_mode == "advised");
        CHECK(rec.n_total == 200);
        CHECK(rec.sq_error.count("gamma_bar") == 1);
        CHECK(rec.iterations > 0);
    }
    // distinct replication seeds
    CHECK(report.records[0].seed != report.records[1].seed);

    const std::string path = "/tmp/mvlme_test_report.jsonl";
    write_report_jsonl(path, report);
    ExperimentReport back = read_report_jsonl(path);
    std::remove(path.c_str());

    REQUIRE(back.records.size() == report.records.size());
    // summaries recompute exactly from the serialized records
    auto s1 = summarize(report);
    auto s2 = summarize(back);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i].block == s2[i].block);
        CHECK(s1[i].metric == s2[i].metric);
        CHECK(s1[i].mean == s2[i].mean);
        CHECK(s1[i].q025 == s2[i].q025);
        CHECK(s1[i].q975 == s2[i].q975);
    }
    CHECK(!format_report_table(report).empty());
}

TEST_CASE("benchmark-em: paired records share seeds and stay deterministic") {
    FitOptions fopts;
    EmOptions eopts;
    eopts.max_iter = 200;
    ExperimentReport report = run_benchmark_em(2, InitMode::naive, {120, 12}, 777, fopts, eopts);
    REQUIRE(report.records.size() == 4);
    for (int rep = 0; rep < 2; ++rep) {
        const auto& prec = report.records[static_cast<std::size_t>(2 * rep)];
        const auto& erec = report.records[static_cast<std::size_t>(2 * rep + 1)];
        CHECK(prec.method == "profiled");
        CHECK(erec.method == "em");
        CHECK(prec.seed == erec.seed);
        CHECK(prec.init_mode == "naive");
        CHECK(erec.em_ascent_ok);
    }

    ExperimentReport again = run_benchmark_em(2, InitMode::naive, {120, 12}, 777, fopts, eopts);
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        CHECK(report.records[i].estimate.sigma1 == again.records[i].estimate.sigma1);
        CHECK(report.records[i].estimate.beta1 == again.records[i].estimate.beta1);
    }

    auto stats = gamma_bar_stats(report);
    CHECK(stats.size() == 2);  // one per method
    CHECK(stats[0].mean.rows() == 4);
}

TEST_CASE("single replication at (600, 50): gamma_bar statistic lands in the reference band") {
    FitOptions opts;
    ExperimentReport report = run_benchmark_mse({{600, 50}}, 1, 2025, opts);
    REQUIRE(report.records.size() == 1);
    const double stat = report.records[0].sq_error_rel.at("gamma_bar");
    CHECK(stat >= 0.12);
    CHECK(stat <= 2.41);
}
