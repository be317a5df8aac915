#include "mvlme/optim.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mvlme/types.hpp"

namespace mvlme {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 48;

}  // namespace

MinimizeResult minimize_qn(const std::function<double(const Eigen::VectorXd&)>& f,
                           Eigen::VectorXd x0, const MinimizeOptions& options) {
    const int n = static_cast<int>(x0.size());
    const double bad = options.infeasible_value;
    int evals = 0;

    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        double v = f(x);
        return std::isfinite(v) ? std::min(v, bad) : bad;
    };

    // Forward differences while progress is cheap; central differences once
    // the forward-difference noise floor stalls the line search.
    const double fd_fwd = std::sqrt(2.2e-16);
    const double fd_ctr = std::cbrt(2.2e-16);
    auto gradient = [&](const Eigen::VectorXd& x, double fx, bool central, Eigen::VectorXd& g) {
        Eigen::VectorXd xp = x;
        for (int j = 0; j < n; ++j) {
            if (central) {
                const double h = fd_ctr * (std::abs(x(j)) + 1.0);
                xp(j) = x(j) + h;
                const double fp = eval(xp);
                xp(j) = x(j) - h;
                const double fm = eval(xp);
                if (fp < bad && fm < bad) {
                    g(j) = (fp - fm) / (2.0 * h);
                } else if (fp < bad) {
                    g(j) = (fp - fx) / h;
                } else if (fm < bad) {
                    g(j) = (fx - fm) / h;
                } else {
                    g(j) = 0.0;
                }
            } else {
                const double h = fd_fwd * (std::abs(x(j)) + 1.0);
                xp(j) = x(j) + h;
                double fp = eval(xp);
                if (fp >= bad) {
                    xp(j) = x(j) - h;
                    fp = eval(xp);
                    g(j) = (fp >= bad) ? 0.0 : (fx - fp) / h;
                } else {
                    g(j) = (fp - fx) / h;
                }
            }
            xp(j) = x(j);
        }
    };

    MinimizeResult res;
    res.x = std::move(x0);
    res.value = eval(res.x);
    if (res.value >= bad) {
        throw InitError("objective is infeasible at the starting point");
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool h_fresh = true;
    bool first_update = true;
    bool use_central = false;
    int small_steps = 0;
    int rescues_left = 10;
    Eigen::VectorXd g(n), g_new(n), d(n), x_new(n), s(n), yv(n);
    gradient(res.x, res.value, use_central, g);

    // Value-only simplex pass from the stall point. Near the feasibility
    // barrier the differenced gradients degrade while plain evaluations stay
    // clean, and reflect/contract moves can slide along the boundary where
    // a quasi-Newton step cannot.
    auto simplex_rescue = [&](double scale) {
        const double f_before = res.value;
        if (options.max_evaluations - evals < 3 * n) return false;
        std::vector<std::pair<double, Eigen::VectorXd>> pts;
        pts.reserve(static_cast<std::size_t>(n) + 1);
        pts.emplace_back(res.value, res.x);
        for (int j = 0; j < n; ++j) {
            Eigen::VectorXd xj = res.x;
            xj(j) += scale * (std::abs(res.x(j)) + 1.0);
            pts.emplace_back(eval(xj), xj);
        }
        auto by_value = [](const auto& a, const auto& b) { return a.first < b.first; };
        std::sort(pts.begin(), pts.end(), by_value);
        const int budget = std::min(options.max_evaluations - evals, 80 * n);
        const int start_evals = evals;
        while (evals - start_evals < budget) {
            if (pts.back().first - pts.front().first <=
                1e-10 * (std::abs(pts.front().first) + 1e-10)) {
                break;
            }
            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)].second;
            centroid /= n;
            const Eigen::VectorXd& worst = pts.back().second;
            const double f_worst = pts.back().first;
            const double f_second = pts[static_cast<std::size_t>(n - 1)].first;

            Eigen::VectorXd xr = centroid + (centroid - worst);
            const double fr = eval(xr);
            if (fr < pts.front().first) {
                Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst);
                const double fe = eval(xe);
                pts.back() = (fe < fr) ? std::make_pair(fe, xe) : std::make_pair(fr, xr);
            } else if (fr < f_second) {
                pts.back() = {fr, xr};
            } else {
                const bool outside = fr < f_worst;
                Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                             : Eigen::VectorXd(centroid - 0.5 * (centroid - worst));
                const double fc = eval(xc);
                if (fc < (outside ? fr : f_worst)) {
                    pts.back() = {fc, xc};
                } else {
                    for (std::size_t i = 1; i < pts.size(); ++i) {
                        pts[i].second = pts.front().second + 0.5 * (pts[i].second - pts.front().second);
                        pts[i].first = eval(pts[i].second);
                    }
                }
            }
            std::sort(pts.begin(), pts.end(), by_value);
        }
        if (pts.front().first < f_before) {
            res.value = pts.front().first;
            res.x = pts.front().second;
            return true;
        }
        return false;
    };

    // Reached when the current phase can no longer make measurable progress;
    // the forward phase hands over to central differences, and a stalled
    // central phase gets simplex rescues (at growing scales) before the
    // search stops.
    auto stall = [&]() {
        if (use_central) {
            bool moved = false;
            while (rescues_left > 0 && !moved) {
                const double scale = (rescues_left % 2 == 0) ? 0.02 : 0.25;
                --rescues_left;
                moved = simplex_rescue(scale);
            }
            if (!moved) return true;
        }
        use_central = true;
        gradient(res.x, res.value, true, g);
        H.setIdentity();
        h_fresh = true;
        first_update = true;
        small_steps = 0;
        return false;
    };

    while (evals < options.max_evaluations) {
        if (g.norm() == 0.0) {
            res.converged = true;
            break;
        }
        d.noalias() = -(H * g);
        double gd = g.dot(d);
        if (!(gd < 0.0) || !d.allFinite()) {
            H.setIdentity();
            h_fresh = true;
            d = -g;
            gd = g.dot(d);
        }

        // First step along a fresh gradient: keep the probe local.
        double alpha = h_fresh ? 1.0 / std::max(1.0, g.norm()) : 1.0;
        double f_new = bad;
        bool accepted = false;
        for (int ls = 0; ls < kMaxBacktracks && evals < options.max_evaluations; ++ls) {
            x_new = res.x + alpha * d;
            f_new = eval(x_new);
            if (f_new < bad && f_new <= res.value + kArmijo * alpha * gd) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (!h_fresh) {
                H.setIdentity();
                h_fresh = true;
                continue;
            }
            if (stall()) {
                res.converged = true;
                break;
            }
            continue;
        }

        ++res.iterations;
        gradient(x_new, f_new, use_central, g_new);
        s = x_new - res.x;
        yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-10 * s.norm() * yv.norm()) {
            if (first_update) {
                H *= sy / yv.squaredNorm();
                first_update = false;
            }
            const double rho = 1.0 / sy;
            Eigen::VectorXd Hy = H * yv;
            const double yHy = yv.dot(Hy);
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            H.noalias() -= rho * (Hy * s.transpose());
            H.noalias() -= rho * (s * Hy.transpose());
            H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
            h_fresh = false;
        }

        const double drop = res.value - f_new;
        res.x = x_new;
        res.value = f_new;
        g = g_new;
        if (drop <= options.rel_tol * (std::abs(res.value) + options.rel_tol)) {
            // two consecutive below-tolerance steps, so this is not a single
            // short line-search step on the way somewhere
            if (++small_steps >= 2) {
                if (stall()) {
                    res.converged = true;
                    break;
                }
            }
        } else {
            small_steps = 0;
        }
    }
    res.evaluations = evals;
    return res;
}

}  // namespace mvlme
