#include <benchmark/benchmark.h>

#include <mvlme/deviance.hpp>
#include <mvlme/em.hpp>
#include <mvlme/fit.hpp>
#include <mvlme/simulate.hpp>

namespace {

mvlme::GroupedBivariateData make_data(int n_total, int n_groups) {
    mvlme::SimConfig config = mvlme::default_config();
    config.n_total = n_total;
    config.n_groups = n_groups;
    config.seed = 1234;
    return mvlme::simulate(config);
}

mvlme::VarianceParams true_params() {
    const mvlme::SimConfig config = mvlme::default_config();
    return *mvlme::variance_params_from_gamma_bar(config.gamma_bar, 2, 2, config.sigma1,
                                                  config.sigma2);
}

void BM_simulate(benchmark::State& state) {
    mvlme::SimConfig config = mvlme::default_config();
    config.n_total = static_cast<int>(state.range(0));
    config.n_groups = static_cast<int>(state.range(1));
    config.seed = 7;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvlme::simulate(config));
    }
}
BENCHMARK(BM_simulate)->Args({600, 50})->Args({3000, 300});

void BM_ml_deviance(benchmark::State& state) {
    const auto data = make_data(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    const auto params = true_params();
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvlme::ml_deviance(data, params));
    }
}
BENCHMARK(BM_ml_deviance)->Args({600, 50})->Args({3000, 300})->Args({15000, 1000});

void BM_profiled_solve(benchmark::State& state) {
    const auto data = make_data(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    const auto sys = mvlme::build_scaled_system(data, true_params());
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvlme::profiled_solve(sys));
    }
}
BENCHMARK(BM_profiled_solve)->Args({600, 50})->Args({3000, 300});

void BM_em_sweep(benchmark::State& state) {
    const auto data = make_data(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    const mvlme::SimConfig config = mvlme::default_config();
    mvlme::EmInit init{{config.beta1, config.beta2}, config.gamma_bar, config.sigma1,
                       config.sigma2};
    mvlme::EmOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-306;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvlme::em_fit(data, init, opts));
    }
}
BENCHMARK(BM_em_sweep)->Args({1000, 100})->Args({3000, 300});

}  // namespace

BENCHMARK_MAIN();
