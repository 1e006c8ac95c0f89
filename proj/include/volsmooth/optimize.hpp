#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace volsmooth::opt {

/// min f(x) subject to lower <= x <= upper and c_i(x) >= 0.
struct ConstrainedProblem {
    std::vector<double> lower;
    std::vector<double> upper;
    std::function<double(const std::vector<double>&)> objective;
    std::function<std::vector<double>(const std::vector<double>&)> constraints;  // may be empty
};

struct AugLagOptions {
    int max_outer = 40;
    int max_inner = 300;
    double initial_penalty = 10.0;
    double penalty_growth = 10.0;
    double max_penalty = 1e12;
    double feasibility_tol = 1e-10;
    double gradient_tol = 1e-13;
};

struct AugLagResult {
    std::vector<double> x;
    double objective = 0.0;
    double max_violation = 0.0;  // max_i (-c_i(x))^+
    int outer_iterations = 0;
};

/// Powell-Hestenes-Rockafellar augmented Lagrangian for inequality constraints.
/// Each subproblem is solved by a projected BFGS iteration on the box with
/// central-difference gradients. Deterministic.
AugLagResult minimize_auglag(const ConstrainedProblem& problem, std::vector<double> x0,
                             const AugLagOptions& options = {});

/// Projected BFGS on a box for a smooth objective.
std::vector<double> minimize_box_bfgs(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& lower, const std::vector<double>& upper,
                                      std::vector<double> x0, int max_iter, double gradient_tol);

}  // namespace volsmooth::opt
