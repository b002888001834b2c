#include "prc/optim.hpp"

#include <cmath>
#include <limits>

#include "prc/errors.hpp"

namespace prc {

namespace {

struct Probe {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0;   // directional derivative along the search direction
    Eigen::VectorXd x;
    Eigen::VectorXd grad;
};

class LineSearch {
public:
    LineSearch(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& dir,
               double f0, double slope0, const OptimOptions& opt)
        : f_(f), x0_(x0), dir_(dir), f0_(f0), slope0_(slope0), opt_(opt) {}

    Probe eval(double alpha) {
        Probe p;
        p.alpha = alpha;
        p.x = x0_ + alpha * dir_;
        p.grad.resize(x0_.size());
        p.value = f_(p.x, &p.grad);
        p.slope = p.grad.dot(dir_);
        return p;
    }

    bool armijo(const Probe& p) const { return p.value <= f0_ + opt_.c1 * p.alpha * slope0_; }
    bool curvature(const Probe& p) const { return std::abs(p.slope) <= -opt_.c2 * slope0_; }

    // Strong-Wolfe search (bracket then zoom). Returns the accepted probe, or
    // the best sufficient-decrease point seen if the interval collapses.
    bool run(Probe& out) {
        double alpha = 1.0;
        Probe prev;
        prev.alpha = 0.0;
        prev.value = f0_;
        prev.slope = slope0_;
        bool have_fallback = false;
        Probe fallback;
        for (int it = 0; it < 30; ++it) {
            Probe cur = eval(alpha);
            if (std::isfinite(cur.value) && armijo(cur) &&
                (!have_fallback || cur.value < fallback.value)) {
                fallback = cur;
                have_fallback = true;
            }
            if (!std::isfinite(cur.value) || !armijo(cur) ||
                (it > 0 && cur.value >= prev.value)) {
                return zoom(prev, cur, out, have_fallback, fallback);
            }
            if (curvature(cur)) {
                out = cur;
                return true;
            }
            if (cur.slope >= 0.0) {
                return zoom(cur, prev, out, have_fallback, fallback);
            }
            prev = cur;
            alpha *= 2.0;
            if (alpha > 1e6) break;
        }
        if (have_fallback) {
            out = fallback;
            return true;
        }
        return false;
    }

private:
    // lo satisfies Armijo with the lowest value seen; hi is the other edge.
    bool zoom(Probe lo, Probe hi, Probe& out, bool have_fallback, Probe fallback) {
        for (int it = 0; it < 50; ++it) {
            double width = std::abs(hi.alpha - lo.alpha);
            if (width < 1e-14 * (1.0 + lo.alpha)) break;
            // bisection with a guard against endpoint stagnation
            double alpha = 0.5 * (lo.alpha + hi.alpha);
            Probe cur = eval(alpha);
            if (std::isfinite(cur.value) && armijo(cur) &&
                (!have_fallback || cur.value < fallback.value)) {
                fallback = cur;
                have_fallback = true;
            }
            if (!std::isfinite(cur.value) || !armijo(cur) || cur.value >= lo.value) {
                hi = cur;
            } else {
                if (curvature(cur)) {
                    out = cur;
                    return true;
                }
                if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = cur;
            }
        }
        if (have_fallback) {
            out = fallback;
            return true;
        }
        if (std::isfinite(lo.value) && lo.alpha > 0.0 && lo.value < f0_) {
            out = lo;
            return !lo.x.size() ? false : true;
        }
        return false;
    }

    const Objective& f_;
    const Eigen::VectorXd& x0_;
    const Eigen::VectorXd& dir_;
    double f0_;
    double slope0_;
    const OptimOptions& opt_;
};

} // namespace

OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options) {
    const Eigen::Index k = x0.size();
    OptimResult result;
    result.x = std::move(x0);
    result.grad.resize(k);
    result.value = f(result.x, &result.grad);
    if (!std::isfinite(result.value)) {
        throw FitError("objective is not finite at the starting point");
    }
    result.trace.push_back(result.value);

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(k, k);
    bool h_is_fresh = true;
    // converged = small gradient AND stalled objective (trivially stalled at
    // entry). The gradient gate is the absolute tolerance, or the scaled one:
    // on a large-magnitude objective the absolute gate can sit below what the
    // floating-point resolution of f allows any step to achieve.
    auto is_converged = [&options](const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   double f_prev, double f) {
        if (std::abs(f_prev - f) > options.rel_tol * (1.0 + std::abs(f))) return false;
        if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol) return true;
        double scaled = 0.0;
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            scaled = std::max(scaled, std::abs(grad[j]) * std::max(std::abs(x[j]), 1.0));
        }
        return scaled <= options.grad_rtol * std::max(std::abs(f), 1.0);
    };

    double f_prev = result.value;
    for (int iter = 0; iter < options.max_iter; ++iter) {
        if (is_converged(result.x, result.grad, f_prev, result.value)) {
            result.converged = true;
            return result;
        }
        Eigen::VectorXd dir = -(H * result.grad);
        double slope = dir.dot(result.grad);
        if (!(slope < 0.0)) {
            // not a descent direction: reset curvature information
            H.setIdentity();
            h_is_fresh = true;
            dir = -result.grad;
            slope = dir.dot(result.grad);
        }
        LineSearch search(f, result.x, dir, result.value, slope, options);
        Probe step;
        if (!search.run(step)) {
            if (!h_is_fresh) {
                H.setIdentity();
                h_is_fresh = true;
                continue;
            }
            // no representable descent along steepest descent either
            result.converged = is_converged(result.x, result.grad, result.value, result.value);
            return result;
        }

        Eigen::VectorXd s = step.x - result.x;
        Eigen::VectorXd y = step.grad - result.grad;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (h_is_fresh) {
                H *= sy / y.squaredNorm();
            }
            Eigen::VectorXd Hy = H * y;
            double yHy = y.dot(Hy);
            // BFGS inverse update
            H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
            H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
            h_is_fresh = false;
        }

        f_prev = result.value;
        result.x = std::move(step.x);
        result.value = step.value;
        result.grad = std::move(step.grad);
        result.iterations = iter + 1;
        result.trace.push_back(result.value);
    }
    result.converged = is_converged(result.x, result.grad, f_prev, result.value);
    return result;
}

} // namespace prc
