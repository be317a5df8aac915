#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvlme/csv.hpp"
#include "mvlme/em.hpp"
#include "mvlme/fit.hpp"
#include "mvlme/simulate.hpp"

namespace mvlme {

// ----- per-replication statistics ------------------------------------------------

/// Parameter blocks scored by the experiments.
const std::vector<std::string>& parameter_blocks();

struct EstimateBundle {
    Eigen::VectorXd beta1, beta2;
    double sigma1 = 0.0, sigma2 = 0.0;
    Eigen::MatrixXd gamma_bar;
};

EstimateBundle truth_bundle(const SimConfig& config);

/// Blockwise squared-error statistics. Absolute: for block P,
/// (1/|P|) sum_j (est_j - true_j)^2. Relative: sum_j ((est_j - true_j)/true_j)^2
/// without the 1/|P| factor (the scale the reference consistency tables are
/// calibrated on); entries with true_j == 0 fall back to the absolute term.
std::map<std::string, double> block_sq_errors(const EstimateBundle& est,
                                              const EstimateBundle& truth, bool relative);

/// Entrywise relative errors |est - true| / |true| per block.
std::map<std::string, Eigen::VectorXd> rel_errors(const EstimateBundle& est,
                                                  const EstimateBundle& truth);

/// Empirical quantile with linear interpolation between order statistics
/// (R type 7).
double quantile(std::vector<double> values, double p);

// ----- experiment records ----------------------------------------------------------

struct ReplicationRecord {
    int n_total = 0, n_groups = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    std::string method;     ///< "profiled" or "em"
    std::string init_mode;  ///< "naive" or "advised"
    EstimateBundle estimate;
    std::map<std::string, double> sq_error;      ///< absolute blockwise statistic
    std::map<std::string, double> sq_error_rel;  ///< relative blockwise statistic
    std::map<std::string, Eigen::VectorXd> rel_error;
    int iterations = 0;  ///< objective evaluations (profiled) or EM sweeps (em)
    int outer_iterations = 0;  ///< quasi-Newton steps; 0 for em
    bool converged = false;
    bool em_ascent_ok = true;  ///< trace non-decreasing within 1e-8 (em only)
};

struct SummaryRow {
    int n_total = 0, n_groups = 0;
    std::string method, init_mode, block, metric;
    double mean = 0.0, q025 = 0.0, q975 = 0.0;
};

struct GammaBarStats {
    std::string method, init_mode;
    Eigen::MatrixXd mean;  ///< entrywise empirical mean of the estimates
    Eigen::MatrixXd sd;    ///< entrywise empirical standard deviation
};

struct ExperimentReport {
    std::string experiment;  ///< "benchmark-mse" or "benchmark-em"
    std::uint64_t base_seed = 0;
    EstimateBundle truth;
    std::vector<ReplicationRecord> records;
};

/// Summaries are a pure function of the records (mean plus 2.5/97.5
/// empirical percentiles per block and metric).
std::vector<SummaryRow> summarize(const ExperimentReport& report);
std::vector<GammaBarStats> gamma_bar_stats(const ExperimentReport& report);

// ----- experiment drivers -----------------------------------------------------------

/// MSE consistency experiment: for each (N, n) simulate `reps` datasets at the
/// default true parameters, fit with the profiled criterion from the advised
/// start, and record blockwise error statistics. Replications run in parallel
/// on derived seed streams; record order is by (size, replication).
ExperimentReport run_benchmark_mse(const std::vector<std::pair<int, int>>& sizes, int reps,
                                   std::uint64_t base_seed,
                                   const FitOptions& fit_options = {});

/// Profiled-vs-EM comparison at one size: both methods start from
/// bitwise-identical initial values per replication (naive or advised).
ExperimentReport run_benchmark_em(int reps, InitMode init_mode, std::pair<int, int> size,
                                  std::uint64_t base_seed, const FitOptions& fit_options = {},
                                  const EmOptions& em_options = {});

// ----- serialization -----------------------------------------------------------------

/// One self-describing JSON record per line: a meta line, one line per
/// replication, the summary rows, and the gamma_bar statistics.
void write_report_jsonl(const std::string& path, const ExperimentReport& report);
ExperimentReport read_report_jsonl(const std::string& path);

/// Aligned human-readable tables (per-block summaries).
std::string format_report_table(const ExperimentReport& report);

}  // namespace mvlme
