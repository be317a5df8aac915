#pragma once

#include <Eigen/Dense>

#include <functional>

namespace mvlme {

/// Objective value returned for infeasible parameter points; large finite so
/// optimizers intolerant of infinities keep working.
inline constexpr double kInfeasibleObjective = 1e12;

struct MinimizeOptions {
    double rel_tol = 1e-8;      ///< stop when |f_old - f_new| <= rel_tol (|f_old| + rel_tol)
    int max_evaluations = 5000;
    double infeasible_value = kInfeasibleObjective;
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;  ///< objective evaluations, finite differences included
    int iterations = 0;   ///< accepted quasi-Newton steps
    bool converged = false;
};

/// Quasi-Newton (BFGS) minimizer with forward-difference gradients and
/// backtracking line search. Non-finite or >= infeasible_value objective
/// values are treated as out-of-bounds probes: the line search backtracks
/// through them and the gradient falls back to one-sided differences. The
/// best-so-far value is monotone non-increasing; the search stops on the
/// relative-change tolerance or on the evaluation budget.
/// Throws InitError when the objective is infeasible at x0.
MinimizeResult minimize_qn(const std::function<double(const Eigen::VectorXd&)>& f,
                           Eigen::VectorXd x0, const MinimizeOptions& options = {});

}  // namespace mvlme
