#include "volsmooth/optimize.hpp"

#include "volsmooth/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace volsmooth::opt {

namespace {

using Vec = Eigen::VectorXd;

void project(std::vector<double>& x, const std::vector<double>& lo, const std::vector<double>& hi) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

Vec fd_gradient(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
                const std::vector<double>& lo, const std::vector<double>& hi) {
    Vec g(static_cast<Eigen::Index>(x.size()));
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
        const double up = std::min(x[i] + h, hi[i]);
        const double dn = std::max(x[i] - h, lo[i]);
        xp[i] = up;
        const double fu = f(xp);
        xp[i] = dn;
        const double fd = f(xp);
        xp[i] = x[i];
        g[static_cast<Eigen::Index>(i)] = (up > dn) ? (fu - fd) / (up - dn) : 0.0;
    }
    return g;
}

}  // namespace

std::vector<double> minimize_box_bfgs(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& lo, const std::vector<double>& hi,
                                      std::vector<double> x, int max_iter, double gradient_tol) {
    const auto n = static_cast<Eigen::Index>(x.size());
    project(x, lo, hi);
    double fx = f(x);
    Vec g = fd_gradient(f, x, lo, hi);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    std::vector<bool> prev_active(x.size(), false);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<bool> active(x.size(), false);
        double pg_norm = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const bool at_lo = x[u] <= lo[u] && g[i] > 0.0;
            const bool at_hi = x[u] >= hi[u] && g[i] < 0.0;
            active[u] = at_lo || at_hi;
            if (!active[u]) pg_norm = std::max(pg_norm, std::abs(g[i]));
        }
        if (pg_norm <= gradient_tol) break;
        if (active != prev_active) H.setIdentity();
        prev_active = active;

        Vec d = -H * g;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)]) d[i] = 0.0;
        }
        if (g.dot(d) >= 0.0) {
            H.setIdentity();
            d = -g;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (active[static_cast<std::size_t>(i)]) d[i] = 0.0;
            }
        }

        double step = 1.0;
        std::vector<double> xn = x;
        double fn = fx;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] + step * d[static_cast<Eigen::Index>(i)];
            project(xn, lo, hi);
            fn = f(xn);
            double decrease = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) decrease += g[static_cast<Eigen::Index>(i)] * (xn[i] - x[i]);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * decrease) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (H.isIdentity()) break;
            H.setIdentity();
            continue;
        }

        Vec gn = fd_gradient(f, xn, lo, hi);
        Vec s(n);
        for (Eigen::Index i = 0; i < n; ++i) s[i] = xn[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)];
        const Vec y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-16 * s.norm() * y.norm() && sy > 0.0) {
            const double r = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - r * s * y.transpose()) * H * (I - r * y * s.transpose()) + r * s * s.transpose();
        }
        const double prev = fx;
        x = std::move(xn);
        fx = fn;
        g = std::move(gn);
        if (std::abs(prev - fx) <= 1e-18 * std::max(1.0, std::abs(fx)) && s.lpNorm<Eigen::Infinity>() < 1e-15) break;
    }
    return x;
}

AugLagResult minimize_auglag(const ConstrainedProblem& problem, std::vector<double> x,
                             const AugLagOptions& options) {
    if (problem.lower.size() != x.size() || problem.upper.size() != x.size()) {
        throw Error(ErrorCode::Shape, "bounds do not match the starting point");
    }
    project(x, problem.lower, problem.upper);

    auto violation = [&](const std::vector<double>& c) {
        double worst = 0.0;
        for (double ci : c) worst = std::max(worst, -ci);
        return worst;
    };

    AugLagResult result;
    if (!problem.constraints) {
        result.x = minimize_box_bfgs(problem.objective, problem.lower, problem.upper, x, options.max_inner,
                                     options.gradient_tol);
        result.objective = problem.objective(result.x);
        return result;
    }

    std::vector<double> lambda(problem.constraints(x).size(), 0.0);
    double mu = options.initial_penalty;
    double prev_violation = violation(problem.constraints(x));

    for (int outer = 0; outer < options.max_outer; ++outer) {
        auto lagrangian = [&](const std::vector<double>& xx) {
            const auto c = problem.constraints(xx);
            double acc = problem.objective(xx);
            for (std::size_t i = 0; i < c.size(); ++i) {
                const double t = std::max(0.0, lambda[i] - mu * c[i]);
                acc += (t * t - lambda[i] * lambda[i]) / (2.0 * mu);
            }
            return acc;
        };
        x = minimize_box_bfgs(lagrangian, problem.lower, problem.upper, x, options.max_inner, options.gradient_tol);
        const auto c = problem.constraints(x);
        const double viol = violation(c);
        for (std::size_t i = 0; i < c.size(); ++i) lambda[i] = std::max(0.0, lambda[i] - mu * c[i]);
        result.outer_iterations = outer + 1;
        if (viol <= options.feasibility_tol) break;
        if (viol > 0.25 * prev_violation) mu = std::min(mu * options.penalty_growth, options.max_penalty);
        prev_violation = viol;
    }
    result.x = x;
    result.objective = problem.objective(x);
    result.max_violation = violation(problem.constraints(x));
    return result;
}

}  // namespace volsmooth::opt
