#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace prc {

// Objective callback: returns f(x) and, when grad is non-null, writes ∇f(x).
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct OptimOptions {
    int max_iter = 500;
    double grad_tol = 1e-5;    // convergence: ∞-norm of gradient ...
    double rel_tol = 1e-8;     // ... and relative objective change below this
    double grad_rtol = 1.5e-8; // scaled fallback: max_j |g_j|·max(|x_j|,1) ≤ grad_rtol·max(|f|,1)
    double c1 = 1e-4;          // Armijo (sufficient decrease)
    double c2 = 0.9;           // curvature (strong Wolfe)
};

struct OptimResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;   // objective after each accepted step, trace[0] = f(x0)
};

// Quasi-Newton (BFGS) minimizer with a strong-Wolfe line search. Smooth
// unconstrained objectives only; every accepted step strictly decreases f.
OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0,
                          const OptimOptions& options = {});

} // namespace prc
