#include "mvlme/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "mvlme/parallel.hpp"

namespace mvlme {

using nlohmann::json;

const std::vector<std::string>& parameter_blocks() {
    static const std::vector<std::string> blocks = {"beta1", "beta2", "sigma1", "sigma2",
                                                    "gamma_bar"};
    return blocks;
}

EstimateBundle truth_bundle(const SimConfig& config) {
    EstimateBundle t;
    t.beta1 = config.beta1;
    t.beta2 = config.beta2;
    t.sigma1 = config.sigma1;
    t.sigma2 = config.sigma2;
    t.gamma_bar = config.gamma_bar;
    return t;
}

namespace {

double sq_err_term(double est, double truth, bool relative) {
    const double d = est - truth;
    if (relative && truth != 0.0) {
        const double r = d / truth;
        return r * r;
    }
    return d * d;
}

// Absolute: mean over the block's entries. Relative: sum over the block's
// entries of ((est - true)/true)^2, the scale the reference consistency
// tables are calibrated on.
double block_sq_err(const Eigen::VectorXd& est, const Eigen::VectorXd& truth, bool relative) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < est.size(); ++i) s += sq_err_term(est(i), truth(i), relative);
    return relative ? s : s / static_cast<double>(est.size());
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

std::map<std::string, double> block_sq_errors(const EstimateBundle& est,
                                              const EstimateBundle& truth, bool relative) {
    std::map<std::string, double> out;
    out["beta1"] = block_sq_err(est.beta1, truth.beta1, relative);
    out["beta2"] = block_sq_err(est.beta2, truth.beta2, relative);
    out["sigma1"] = sq_err_term(est.sigma1, truth.sigma1, relative);
    out["sigma2"] = sq_err_term(est.sigma2, truth.sigma2, relative);
    out["gamma_bar"] = block_sq_err(flatten(est.gamma_bar), flatten(truth.gamma_bar), relative);
    return out;
}

std::map<std::string, Eigen::VectorXd> rel_errors(const EstimateBundle& est,
                                                  const EstimateBundle& truth) {
    auto rel_vec = [](const Eigen::VectorXd& e, const Eigen::VectorXd& t) {
        Eigen::VectorXd out(e.size());
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            out(i) = (t(i) != 0.0) ? std::abs(e(i) - t(i)) / std::abs(t(i)) : std::abs(e(i) - t(i));
        }
        return out;
    };
    std::map<std::string, Eigen::VectorXd> out;
    out["beta1"] = rel_vec(est.beta1, truth.beta1);
    out["beta2"] = rel_vec(est.beta2, truth.beta2);
    out["sigma1"] = rel_vec(Eigen::VectorXd::Constant(1, est.sigma1),
                            Eigen::VectorXd::Constant(1, truth.sigma1));
    out["sigma2"] = rel_vec(Eigen::VectorXd::Constant(1, est.sigma2),
                            Eigen::VectorXd::Constant(1, truth.sigma2));
    out["gamma_bar"] = rel_vec(flatten(est.gamma_bar), flatten(truth.gamma_bar));
    return out;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ShapeError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

// ----- record construction -------------------------------------------------------

namespace {

ReplicationRecord make_record(const EstimateBundle& est, const EstimateBundle& truth, int N, int n,
                              int rep, std::uint64_t seed, const std::string& method,
                              const std::string& init_mode) {
    ReplicationRecord rec;
    rec.n_total = N;
    rec.n_groups = n;
    rec.rep = rep;
    rec.seed = seed;
    rec.method = method;
    rec.init_mode = init_mode;
    rec.estimate = est;
    rec.sq_error = block_sq_errors(est, truth, false);
    rec.sq_error_rel = block_sq_errors(est, truth, true);
    rec.rel_error = rel_errors(est, truth);
    return rec;
}

bool trace_is_ascending(const EmFit& em, double tol) {
    double prev = em.initial_loglik;
    for (double v : em.loglik_trace) {
        if (v < prev - tol) return false;
        prev = v;
    }
    return true;
}

EstimateBundle bundle_from_fit(const FitResult& fr) {
    EstimateBundle b;
    b.beta1 = fr.beta.beta1;
    b.beta2 = fr.beta.beta2;
    b.sigma1 = fr.params.sigma1;
    b.sigma2 = fr.params.sigma2;
    b.gamma_bar = fr.gamma_bar;
    return b;
}

EstimateBundle bundle_from_em(const EmFit& em) {
    EstimateBundle b;
    b.beta1 = em.beta.beta1;
    b.beta2 = em.beta.beta2;
    b.sigma1 = em.sigma1;
    b.sigma2 = em.sigma2;
    b.gamma_bar = em.gamma_bar;
    return b;
}

}  // namespace

// ----- experiment drivers ----------------------------------------------------------

ExperimentReport run_benchmark_mse(const std::vector<std::pair<int, int>>& sizes, int reps,
                                   std::uint64_t base_seed, const FitOptions& fit_options) {
    if (sizes.empty() || reps < 1) throw ShapeError("benchmark-mse needs sizes and reps >= 1");
    ExperimentReport report;
    report.experiment = "benchmark-mse";
    report.base_seed = base_seed;
    const SimConfig base_config = default_config();
    report.truth = truth_bundle(base_config);

    const int total = static_cast<int>(sizes.size()) * reps;
    report.records.resize(static_cast<std::size_t>(total));
    parallel_for(total, [&](int idx) {
        const int si = idx / reps;
        const int rep = idx % reps;
        SimConfig config = base_config;
        config.n_total = sizes[static_cast<std::size_t>(si)].first;
        config.n_groups = sizes[static_cast<std::size_t>(si)].second;
        config.seed = derive_seed(base_seed, static_cast<std::uint64_t>(si),
                                  static_cast<std::uint64_t>(rep));
        GroupedBivariateData data = simulate(config);

        FitOptions opts = fit_options;
        opts.rng_seed = derive_seed(config.seed, 0x666974ULL);
        VarianceParams init = advised_init(data, opts);
        FitResult fr = fit(data, init, opts);

        ReplicationRecord rec = make_record(bundle_from_fit(fr), report.truth, config.n_total,
                                            config.n_groups, rep, config.seed, "profiled",
                                            "advised");
        rec.iterations = fr.iterations;
        rec.outer_iterations = fr.outer_iterations;
        rec.converged = fr.converged;
        report.records[static_cast<std::size_t>(idx)] = std::move(rec);
    });
    return report;
}

ExperimentReport run_benchmark_em(int reps, InitMode init_mode, std::pair<int, int> size,
                                  std::uint64_t base_seed, const FitOptions& fit_options,
                                  const EmOptions& em_options) {
    if (reps < 1) throw ShapeError("benchmark-em needs reps >= 1");
    if (init_mode == InitMode::explicit_values) {
        throw ShapeError("benchmark-em supports naive or advised initialization");
    }
    ExperimentReport report;
    report.experiment = "benchmark-em";
    report.base_seed = base_seed;
    const SimConfig base_config = default_config();
    report.truth = truth_bundle(base_config);
    const std::string mode = (init_mode == InitMode::naive) ? "naive" : "advised";

    std::vector<std::array<ReplicationRecord, 2>> slots(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](int rep) {
        SimConfig config = base_config;
        config.n_total = size.first;
        config.n_groups = size.second;
        config.seed = derive_seed(base_seed, 0, static_cast<std::uint64_t>(rep));
        GroupedBivariateData data = simulate(config);

        FitOptions opts = fit_options;
        opts.rng_seed = derive_seed(config.seed, 0x666974ULL);

        // Both methods receive bitwise-identical starting values.
        VarianceParams init;
        FixedEffects em_beta0;
        if (init_mode == InitMode::naive) {
            RngStream rng(derive_seed(config.seed, 0x696e6974ULL));
            init = naive_init(data.t(0), data.t(1), rng);
            em_beta0.beta1 = Eigen::VectorXd::Zero(data.p(0));
            em_beta0.beta2 = Eigen::VectorXd::Zero(data.p(1));
        } else {
            init = advised_init(data, opts);
            ScaledSystem sys = build_scaled_system(data, init);
            ProfiledSolution sol = profiled_solve(sys);
            em_beta0.beta1 = sol.beta_hat.head(data.p(0));
            em_beta0.beta2 = sol.beta_hat.tail(data.p(1));
        }

        FitResult fr = fit(data, init, opts);
        ReplicationRecord prec = make_record(bundle_from_fit(fr), report.truth, size.first,
                                             size.second, rep, config.seed, "profiled", mode);
        prec.iterations = fr.iterations;
        prec.outer_iterations = fr.outer_iterations;
        prec.converged = fr.converged;

        // A boundary start (singular marginal fit) gets a small ridge so EM
        // can accept it.
        Eigen::MatrixXd gamma0 = assemble_gamma_bar(init);
        try {
            cholesky_lower(gamma0);
        } catch (const NotPositiveDefinite&) {
            gamma0 += 1e-6 * gamma0.trace() / gamma0.rows() *
                      Eigen::MatrixXd::Identity(gamma0.rows(), gamma0.cols());
        }
        EmInit em_init{em_beta0, gamma0, init.sigma1, init.sigma2};
        EmFit em = em_fit(data, em_init, em_options);
        ReplicationRecord erec = make_record(bundle_from_em(em), report.truth, size.first,
                                             size.second, rep, config.seed, "em", mode);
        erec.iterations = em.iterations;
        erec.converged = em.converged;
        erec.em_ascent_ok = trace_is_ascending(em, 1e-8);

        slots[static_cast<std::size_t>(rep)] = {std::move(prec), std::move(erec)};
    });
    for (auto& pair : slots) {
        report.records.push_back(std::move(pair[0]));
        report.records.push_back(std::move(pair[1]));
    }
    return report;
}

// ----- summaries ---------------------------------------------------------------------

namespace {

using GroupKey = std::tuple<int, int, std::string, std::string>;

std::map<GroupKey, std::vector<const ReplicationRecord*>> group_records(
    const ExperimentReport& report) {
    std::map<GroupKey, std::vector<const ReplicationRecord*>> groups;
    for (const auto& rec : report.records) {
        groups[{rec.n_total, rec.n_groups, rec.method, rec.init_mode}].push_back(&rec);
    }
    return groups;
}

SummaryRow stat_row(const GroupKey& key, const std::string& block, const std::string& metric,
                    const std::vector<double>& values) {
    SummaryRow row;
    row.n_total = std::get<0>(key);
    row.n_groups = std::get<1>(key);
    row.method = std::get<2>(key);
    row.init_mode = std::get<3>(key);
    row.block = block;
    row.metric = metric;
    double s = 0.0;
    for (double v : values) s += v;
    row.mean = s / static_cast<double>(values.size());
    row.q025 = quantile(values, 0.025);
    row.q975 = quantile(values, 0.975);
    return row;
}

}  // namespace

std::vector<SummaryRow> summarize(const ExperimentReport& report) {
    std::vector<SummaryRow> rows;
    for (const auto& [key, recs] : group_records(report)) {
        for (const std::string& block : parameter_blocks()) {
            std::vector<double> abs_v, rel_v;
            abs_v.reserve(recs.size());
            rel_v.reserve(recs.size());
            for (const auto* r : recs) {
                abs_v.push_back(r->sq_error.at(block));
                rel_v.push_back(r->sq_error_rel.at(block));
            }
            rows.push_back(stat_row(key, block, "sq_error", abs_v));
            rows.push_back(stat_row(key, block, "sq_error_rel", rel_v));
        }
        // Per-coefficient estimate and relative-error summaries for the
        // vector-valued blocks plus the sigmas.
        auto coefficient = [&](const std::string& block, Eigen::Index j,
                               const std::string& label) {
            std::vector<double> est_v, rel_v;
            for (const auto* r : recs) {
                double est = 0.0;
                if (block == "beta1") est = r->estimate.beta1(j);
                else if (block == "beta2") est = r->estimate.beta2(j);
                else if (block == "sigma1") est = r->estimate.sigma1;
                else est = r->estimate.sigma2;
                est_v.push_back(est);
                rel_v.push_back(r->rel_error.at(block)(j));
            }
            rows.push_back(stat_row(key, label, "estimate", est_v));
            rows.push_back(stat_row(key, label, "rel_error", rel_v));
        };
        if (!recs.empty()) {
            for (Eigen::Index j = 0; j < (*recs.front()).estimate.beta1.size(); ++j) {
                coefficient("beta1", j, "beta1[" + std::to_string(j) + "]");
            }
            for (Eigen::Index j = 0; j < (*recs.front()).estimate.beta2.size(); ++j) {
                coefficient("beta2", j, "beta2[" + std::to_string(j) + "]");
            }
            coefficient("sigma1", 0, "sigma1");
            coefficient("sigma2", 0, "sigma2");
            std::vector<double> iters;
            for (const auto* r : recs) iters.push_back(static_cast<double>(r->iterations));
            rows.push_back(stat_row(key, "iterations", "iterations", iters));
        }
    }
    return rows;
}

std::vector<GammaBarStats> gamma_bar_stats(const ExperimentReport& report) {
    std::vector<GammaBarStats> out;
    for (const auto& [key, recs] : group_records(report)) {
        if (recs.empty()) continue;
        const Eigen::Index T = recs.front()->estimate.gamma_bar.rows();
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(T, T);
        for (const auto* r : recs) mean += r->estimate.gamma_bar;
        mean /= static_cast<double>(recs.size());
        Eigen::MatrixXd var = Eigen::MatrixXd::Zero(T, T);
        for (const auto* r : recs) {
            var += (r->estimate.gamma_bar - mean).cwiseProduct(r->estimate.gamma_bar - mean);
        }
        const double denom = recs.size() > 1 ? static_cast<double>(recs.size() - 1) : 1.0;
        GammaBarStats st;
        st.method = std::get<2>(key);
        st.init_mode = std::get<3>(key);
        st.mean = mean;
        st.sd = (var / denom).cwiseSqrt();
        out.push_back(std::move(st));
    }
    return out;
}

// ----- serialization -------------------------------------------------------------------

namespace {

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

Eigen::VectorXd vec_from(const json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd mat_from(const json& j) {
    auto rows = j.get<std::vector<std::vector<double>>>();
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index k = 0; k < c; ++k) {
            m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
    }
    return m;
}

json bundle_json(const EstimateBundle& b) {
    json j;
    j["beta1"] = vec_json(b.beta1);
    j["beta2"] = vec_json(b.beta2);
    j["sigma1"] = b.sigma1;
    j["sigma2"] = b.sigma2;
    j["gamma_bar"] = mat_json(b.gamma_bar);
    return j;
}

EstimateBundle bundle_from(const json& j) {
    EstimateBundle b;
    b.beta1 = vec_from(j.at("beta1"));
    b.beta2 = vec_from(j.at("beta2"));
    b.sigma1 = j.at("sigma1").get<double>();
    b.sigma2 = j.at("sigma2").get<double>();
    b.gamma_bar = mat_from(j.at("gamma_bar"));
    return b;
}

}  // namespace

void write_report_jsonl(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open output file: " + path);
    json meta;
    meta["type"] = "meta";
    meta["experiment"] = report.experiment;
    meta["base_seed"] = report.base_seed;
    meta["truth"] = bundle_json(report.truth);
    meta["n_records"] = report.records.size();
    out << meta.dump() << '\n';

    for (const auto& rec : report.records) {
        json j;
        j["type"] = "replication";
        j["N"] = rec.n_total;
        j["n"] = rec.n_groups;
        j["rep"] = rec.rep;
        j["seed"] = rec.seed;
        j["method"] = rec.method;
        j["init"] = rec.init_mode;
        j["estimate"] = bundle_json(rec.estimate);
        j["sq_error"] = rec.sq_error;
        j["sq_error_rel"] = rec.sq_error_rel;
        json rel;
        for (const auto& [k, v] : rec.rel_error) rel[k] = vec_json(v);
        j["rel_error"] = rel;
        j["iterations"] = rec.iterations;
        j["outer_iterations"] = rec.outer_iterations;
        j["converged"] = rec.converged;
        j["em_ascent_ok"] = rec.em_ascent_ok;
        out << j.dump() << '\n';
    }
    for (const auto& row : summarize(report)) {
        json j;
        j["type"] = "summary";
        j["N"] = row.n_total;
        j["n"] = row.n_groups;
        j["method"] = row.method;
        j["init"] = row.init_mode;
        j["block"] = row.block;
        j["metric"] = row.metric;
        j["mean"] = row.mean;
        j["q025"] = row.q025;
        j["q975"] = row.q975;
        out << j.dump() << '\n';
    }
    for (const auto& st : gamma_bar_stats(report)) {
        json j;
        j["type"] = "gamma_bar_stats";
        j["method"] = st.method;
        j["init"] = st.init_mode;
        j["mean"] = mat_json(st.mean);
        j["sd"] = mat_json(st.sd);
        out << j.dump() << '\n';
    }
    if (!out) throw LoadError("failed writing " + path);
}

ExperimentReport read_report_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open report file: " + path);
    ExperimentReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw LoadError(std::string("invalid report line: ") + e.what());
        }
        const std::string type = j.at("type").get<std::string>();
        if (type == "meta") {
            report.experiment = j.at("experiment").get<std::string>();
            report.base_seed = j.at("base_seed").get<std::uint64_t>();
            report.truth = bundle_from(j.at("truth"));
        } else if (type == "replication") {
            ReplicationRecord rec;
            rec.n_total = j.at("N").get<int>();
            rec.n_groups = j.at("n").get<int>();
            rec.rep = j.at("rep").get<int>();
            rec.seed = j.at("seed").get<std::uint64_t>();
            rec.method = j.at("method").get<std::string>();
            rec.init_mode = j.at("init").get<std::string>();
            rec.estimate = bundle_from(j.at("estimate"));
            rec.sq_error = j.at("sq_error").get<std::map<std::string, double>>();
            rec.sq_error_rel = j.at("sq_error_rel").get<std::map<std::string, double>>();
            for (const auto& [k, v] : j.at("rel_error").items()) {
                rec.rel_error[k] = vec_from(v);
            }
            rec.iterations = j.at("iterations").get<int>();
            rec.outer_iterations = j.at("outer_iterations").get<int>();
            rec.converged = j.at("converged").get<bool>();
            rec.em_ascent_ok = j.at("em_ascent_ok").get<bool>();
            report.records.push_back(std::move(rec));
        }
        // summary and gamma_bar_stats lines are derived; recomputed on read
    }
    return report;
}

std::string format_report_table(const ExperimentReport& report) {
    std::ostringstream os;
    char buf[256];
    os << "experiment: " << report.experiment << "\n";
    auto rows = summarize(report);
    std::snprintf(buf, sizeof(buf), "%6s %6s %-9s %-8s %-12s %-12s %12s %12s %12s\n", "N", "n",
                  "method", "init", "block", "metric", "mean", "q2.5%", "q97.5%");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%6d %6d %-9s %-8s %-12s %-12s %12.4f %12.4f %12.4f\n",
                      r.n_total, r.n_groups, r.method.c_str(), r.init_mode.c_str(),
                      r.block.c_str(), r.metric.c_str(), r.mean, r.q025, r.q975);
        os << buf;
    }
    for (const auto& st : gamma_bar_stats(report)) {
        os << "gamma_bar empirical mean (" << st.method << ", " << st.init_mode << "):\n";
        for (Eigen::Index i = 0; i < st.mean.rows(); ++i) {
            for (Eigen::Index c = 0; c < st.mean.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), " %9.2f", st.mean(i, c));
                os << buf;
            }
            os << "\n";
        }
        os << "gamma_bar entrywise sd (" << st.method << ", " << st.init_mode << "):\n";
        for (Eigen::Index i = 0; i < st.sd.rows(); ++i) {
            for (Eigen::Index c = 0; c < st.sd.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), " %9.2f", st.sd(i, c));
                os << buf;
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace mvlme
