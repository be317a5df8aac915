// Command-line surface: dataset simulation, model fitting, and the two
// benchmark experiments. Exit codes: 0 success, 1 input error,
// 2 nonconvergence, 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <mvlme/csv.hpp>
#include <mvlme/em.hpp>
#include <mvlme/fit.hpp>
#include <mvlme/report.hpp>
#include <mvlme/simulate.hpp>

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNonconvergence = 2;
constexpr int kExitNumerical = 3;

std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
    std::vector<std::pair<int, int>> sizes;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto x = tok.find('x');
        if (x == std::string::npos) {
            throw mvlme::LoadError("size '" + tok + "' is not of the form NxM");
        }
        try {
            sizes.emplace_back(std::stoi(tok.substr(0, x)), std::stoi(tok.substr(x + 1)));
        } catch (const std::exception&) {
            throw mvlme::LoadError("size '" + tok + "' is not of the form NxM");
        }
    }
    if (sizes.empty()) throw mvlme::LoadError("no sizes given");
    return sizes;
}

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}

int cmd_simulate(const std::string& config_path, const std::string& out,
                 std::optional<std::uint64_t> seed, const std::string& size) {
    mvlme::SimConfig config =
        config_path.empty() ? mvlme::default_config() : mvlme::sim_config_from_file(config_path);
    if (seed) config.seed = *seed;
    if (!size.empty()) {
        auto sizes = parse_sizes(size);
        config.n_total = sizes.front().first;
        config.n_groups = sizes.front().second;
    }
    config.validate();
    mvlme::GroupedBivariateData data = mvlme::simulate(config);
    mvlme::write_dataset_csv(out, data);
    mvlme::write_truth_json(out + ".truth.json", config);
    std::cout << "wrote " << data.n_obs() << " rows (" << data.n_groups() << " groups) to " << out
              << "\n";
    return kExitOk;
}

int cmd_fit(const std::string& data_path, const std::string& spec_path,
            const std::string& criterion_flag, const std::string& init_flag,
            std::uint64_t seed, const std::string& out) {
    mvlme::ModelSpec spec =
        spec_path.empty() ? mvlme::default_model_spec() : mvlme::model_spec_from_file(spec_path);
    if (!criterion_flag.empty()) {
        if (criterion_flag == "ml") spec.criterion = mvlme::FitCriterion::ml;
        else if (criterion_flag == "reml") spec.criterion = mvlme::FitCriterion::reml;
        else throw mvlme::LoadError("--criterion must be ml or reml");
    }
    if (!init_flag.empty()) {
        if (init_flag == "naive") spec.init = mvlme::InitMode::naive;
        else if (init_flag == "advised") spec.init = mvlme::InitMode::advised;
        else throw mvlme::LoadError("--init must be naive or advised");
    }
    mvlme::GroupedBivariateData data = mvlme::load_csv(data_path, spec);

    mvlme::FitOptions opts;
    opts.criterion = spec.criterion;
    opts.rng_seed = seed;
    mvlme::VarianceParams init;
    switch (spec.init) {
        case mvlme::InitMode::naive: {
            mvlme::RngStream rng(mvlme::derive_seed(seed, 0x696e6974ULL));
            init = mvlme::naive_init(data.t(0), data.t(1), rng);
            break;
        }
        case mvlme::InitMode::advised:
            init = mvlme::advised_init(data, opts);
            break;
        case mvlme::InitMode::explicit_values:
            init = *spec.init_values;
            break;
    }
    mvlme::FitResult fr = mvlme::fit(data, init, opts);

    json rep;
    rep["criterion"] = (spec.criterion == mvlme::FitCriterion::ml) ? "ml" : "reml";
    rep["criterion_value"] = fr.criterion_value;
    rep["converged"] = fr.converged;
    rep["iterations"] = fr.iterations;
    rep["outer_iterations"] = fr.outer_iterations;
    rep["beta1"] = vec_json(fr.beta.beta1);
    rep["beta2"] = vec_json(fr.beta.beta2);
    rep["sigma1"] = fr.params.sigma1;
    rep["sigma2"] = fr.params.sigma2;
    rep["gamma_bar"] = mat_json(fr.gamma_bar);
    rep["theta1"] = vec_json(fr.params.theta1);
    rep["theta2"] = vec_json(fr.params.theta2);
    rep["rho"] = mat_json(fr.params.rho);
    rep["init_used"] = vec_json(fr.init_used);
    if (!fr.converged) rep["warning"] = "evaluation budget exhausted before convergence";

    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw mvlme::LoadError("cannot open output file: " + out);
        f << rep.dump(2) << '\n';
    }
    std::printf("criterion value   %.6f\n", fr.criterion_value);
    std::printf("converged         %s (%d evaluations, %d quasi-Newton steps)\n",
                fr.converged ? "yes" : "no", fr.iterations, fr.outer_iterations);
    std::printf("sigma             %.4f  %.4f\n", fr.params.sigma1, fr.params.sigma2);
    std::cout << "beta1            " << fr.beta.beta1.transpose() << "\n";
    std::cout << "beta2            " << fr.beta.beta2.transpose() << "\n";
    std::cout << "gamma_bar\n" << fr.gamma_bar << "\n";
    return fr.converged ? kExitOk : kExitNonconvergence;
}

int cmd_benchmark_mse(const std::string& sizes_flag, int reps, std::uint64_t seed,
                      const std::string& out) {
    auto sizes = parse_sizes(sizes_flag);
    mvlme::ExperimentReport report = mvlme::run_benchmark_mse(sizes, reps, seed);
    if (!out.empty()) mvlme::write_report_jsonl(out, report);
    std::cout << mvlme::format_report_table(report);
    return kExitOk;
}

int cmd_benchmark_em(const std::string& size_flag, int reps, const std::string& init_flag,
                     std::uint64_t seed, const std::string& out) {
    auto sizes = parse_sizes(size_flag);
    mvlme::InitMode mode;
    if (init_flag == "naive") mode = mvlme::InitMode::naive;
    else if (init_flag == "advised") mode = mvlme::InitMode::advised;
    else throw mvlme::LoadError("--init must be naive or advised");
    mvlme::ExperimentReport report =
        mvlme::run_benchmark_em(reps, mode, sizes.front(), seed);
    if (!out.empty()) mvlme::write_report_jsonl(out, report);
    std::cout << mvlme::format_report_table(report);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bivariate linear mixed-effects fitting via the profiled deviance"};
    app.require_subcommand(1);

    std::string config_path, out, data_path, spec_path;
    std::string criterion_flag, fit_init_flag, em_init_flag = "naive";
    std::string size_flag = "1000x100", sizes_flag = "600x50,3000x100", sim_size_flag;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int reps = 20;

    CLI::App* sim = app.add_subcommand("simulate", "simulate a longitudinal dataset");
    sim->add_option("--config", config_path, "simulation config JSON");
    sim->add_option("--out", out, "output CSV path")->required();
    sim->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_given = true;
    });
    sim->add_option("--sizes", sim_size_flag, "NxM size override");

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a bivariate model to a CSV dataset");
    fit_cmd->add_option("--data", data_path, "CSV dataset")->required();
    fit_cmd->add_option("--spec", spec_path, "model spec JSON (default: working design)");
    fit_cmd->add_option("--criterion", criterion_flag, "ml|reml (overrides the spec)");
    fit_cmd->add_option("--init", fit_init_flag, "naive|advised (overrides the spec)");
    fit_cmd->add_option("--seed", seed, "seed for naive starting values");
    fit_cmd->add_option("--out", out, "report JSON path");

    CLI::App* mse = app.add_subcommand("benchmark-mse", "estimator consistency experiment");
    mse->add_option("--sizes", sizes_flag, "comma-separated NxM sizes");
    mse->add_option("--reps", reps, "replications per size");
    mse->add_option("--seed", seed, "base seed");
    mse->add_option("--out", out, "JSONL report path");

    CLI::App* em = app.add_subcommand("benchmark-em", "profiled-vs-EM comparison experiment");
    em->add_option("--sizes", size_flag, "NxM size (default 1000x100)");
    em->add_option("--reps", reps, "replications");
    em->add_option("--init", em_init_flag, "naive|advised");
    em->add_option("--seed", seed, "base seed");
    em->add_option("--out", out, "JSONL report path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            return cmd_simulate(config_path, out,
                                seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                sim_size_flag);
        }
        if (fit_cmd->parsed()) {
            return cmd_fit(data_path, spec_path, criterion_flag, fit_init_flag, seed, out);
        }
        if (mse->parsed()) return cmd_benchmark_mse(sizes_flag, reps, seed, out);
        if (em->parsed()) return cmd_benchmark_em(size_flag, reps, em_init_flag, seed, out);
    } catch (const mvlme::LoadError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const mvlme::ShapeError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const mvlme::NotPositiveDefinite& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const mvlme::RankDeficientFixedDesign& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const mvlme::EmNumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const mvlme::InitError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
