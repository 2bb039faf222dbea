#pragma once

#include <functional>
#include <vector>

#include "kfan/types.hpp"

namespace kfan {

/// Objective callback: returns the value at x and writes the gradient.
using Objective = std::function<double(const Vector& x, Vector& grad)>;
using ValueFn = std::function<double(const Vector& x)>;

struct LbfgsConfig {
    int memory = 10;
    int max_iterations = 100;
    double grad_tolerance = 1e-5;  // on the max-norm of the gradient
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_search_steps = 20;
};

/// One accepted line-search step, kept so the Wolfe conditions can be
/// audited after the fact.
struct LbfgsStep {
    double f_before = 0.0;
    double f_after = 0.0;
    double directional_before = 0.0;  // g_k . p_k
    double directional_after = 0.0;   // g_{k+1} . p_k
    double step_length = 0.0;
};

struct LbfgsResult {
    Vector x;
    std::vector<double> history;  // objective value per accepted iterate
    std::vector<LbfgsStep> steps;
    bool converged = false;           // gradient tolerance reached
    bool line_search_failed = false;  // stopped early, x is best-so-far
    int iterations = 0;
};

/// Two-loop-recursion L-BFGS with a strong-Wolfe line search. The value
/// history is strictly non-increasing; a line search that cannot satisfy
/// the Wolfe conditions within cfg.max_line_search_steps evaluations ends
/// the run with the best iterate seen and the failure flag set.
LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsConfig& cfg = {});

/// Plain gradient descent, x <- x - eta * grad, `steps` times.
Vector sgd_minimize(const Objective& objective, const Vector& x0, double eta,
                    int steps);

/// Central finite differences, (f(x + h e_i) - f(x - h e_i)) / 2h.
Vector finite_diff_grad(const ValueFn& f, const Vector& x, double h);

}  // namespace kfan
