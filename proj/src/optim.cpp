#include "kfan/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "kfan/error.hpp"

namespace kfan {

namespace {

struct Probe {
    double alpha;
    double value;
    double slope;  // gradient at the probe dotted with the direction
    Vector x;
    Vector grad;
};

class LineSearch {
  public:
    LineSearch(const Objective& objective, const Vector& x, const Vector& direction,
               double f0, double slope0, const LbfgsConfig& cfg)
        : objective_(objective), x_(x), p_(direction), f0_(f0), slope0_(slope0),
          cfg_(cfg) {}

    bool ok(const Probe& pr) const {
        return pr.value <= f0_ + cfg_.wolfe_c1 * pr.alpha * slope0_ &&
               std::abs(pr.slope) <= cfg_.wolfe_c2 * std::abs(slope0_);
    }

    // Strong-Wolfe search: bracketing phase followed by bisection zoom.
    // Returns false when the evaluation budget runs out.
    bool run(Probe& out) {
        Probe prev{0.0, f0_, slope0_, x_, Vector()};
        double alpha = 1.0;
        for (int round = 0; round < cfg_.max_line_search_steps; ++round) {
            Probe cur = eval(alpha);
            if (!std::isfinite(cur.value))
                return zoom(prev, cur, out);
            if (cur.value > f0_ + cfg_.wolfe_c1 * alpha * slope0_ ||
                (round > 0 && cur.value >= prev.value))
                return zoom(prev, cur, out);
            if (std::abs(cur.slope) <= cfg_.wolfe_c2 * std::abs(slope0_)) {
                out = std::move(cur);
                return true;
            }
            if (cur.slope >= 0.0) return zoom(cur, prev, out);
            prev = std::move(cur);
            alpha *= 2.0;
        }
        return false;
    }

    int evaluations() const { return evaluations_; }

  private:
    Probe eval(double alpha) {
        Probe pr;
        pr.alpha = alpha;
        pr.x = x_ + alpha * p_;
        pr.grad.resize(x_.size());
        pr.value = objective_(pr.x, pr.grad);
        pr.slope = pr.grad.dot(p_);
        ++evaluations_;
        return pr;
    }

    // lo satisfies the sufficient-decrease condition, hi does not (or
    // sits past a slope sign change); bisect until both Wolfe conditions
    // hold or the budget runs out.
    bool zoom(Probe lo, Probe hi, Probe& out) {
        while (evaluations_ < cfg_.max_line_search_steps) {
            Probe mid = eval(0.5 * (lo.alpha + hi.alpha));
            if (!std::isfinite(mid.value) ||
                mid.value > f0_ + cfg_.wolfe_c1 * mid.alpha * slope0_ ||
                mid.value >= lo.value) {
                hi = std::move(mid);
                continue;
            }
            if (std::abs(mid.slope) <= cfg_.wolfe_c2 * std::abs(slope0_)) {
                out = std::move(mid);
                return true;
            }
            if (mid.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
            lo = std::move(mid);
        }
        return false;
    }

    const Objective& objective_;
    const Vector& x_;
    const Vector& p_;
    double f0_;
    double slope0_;
    const LbfgsConfig& cfg_;
    int evaluations_ = 0;
};

void check_lbfgs_config(const LbfgsConfig& cfg) {
    if (cfg.memory < 0) throw DomainError("memory must be non-negative");
    if (cfg.max_iterations <= 0) throw DomainError("max_iterations must be positive");
    if (cfg.max_line_search_steps <= 0)
        throw DomainError("max_line_search_steps must be positive");
    if (!(0.0 < cfg.wolfe_c1 && cfg.wolfe_c1 < cfg.wolfe_c2 && cfg.wolfe_c2 < 1.0))
        throw DomainError("need 0 < wolfe_c1 < wolfe_c2 < 1");
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsConfig& cfg) {
    check_lbfgs_config(cfg);
    LbfgsResult result;
    Vector x = x0;
    Vector grad(x.size());
    double f = objective(x, grad);
    if (!std::isfinite(f)) throw NumericError("objective non-finite at the start");
    result.history.push_back(f);

    struct Pair {
        Vector s, y;
        double rho;
    };
    std::deque<Pair> pairs;

    Vector best_x = x;
    double best_f = f;

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        if (grad.size() == 0 || grad.cwiseAbs().maxCoeff() < cfg.grad_tolerance) {
            result.converged = true;
            break;
        }

        // Two-loop recursion for p = -H grad.
        Vector q = grad;
        std::vector<double> alpha(pairs.size());
        for (std::size_t i = pairs.size(); i-- > 0;) {
            alpha[i] = pairs[i].rho * pairs[i].s.dot(q);
            q -= alpha[i] * pairs[i].y;
        }
        if (!pairs.empty()) {
            const Pair& last = pairs.back();
            q *= last.s.dot(last.y) / last.y.dot(last.y);
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const double beta = pairs[i].rho * pairs[i].y.dot(q);
            q += (alpha[i] - beta) * pairs[i].s;
        }
        Vector p = -q;

        double slope = grad.dot(p);
        if (slope >= 0.0) {  // curvature information went stale
            p = -grad;
            slope = grad.dot(p);
            pairs.clear();
        }

        LineSearch search(objective, x, p, f, slope, cfg);
        Probe accepted;
        if (!search.run(accepted)) {
            result.line_search_failed = true;
            break;
        }

        result.steps.push_back({f, accepted.value, slope, accepted.slope,
                                accepted.alpha});
        Vector s = accepted.x - x;
        Vector ygrad = accepted.grad - grad;
        const double sy = s.dot(ygrad);
        if (cfg.memory > 0 && sy > 1e-12) {
            pairs.push_back({std::move(s), std::move(ygrad), 1.0 / sy});
            while (static_cast<int>(pairs.size()) > cfg.memory) pairs.pop_front();
        }

        x = accepted.x;
        grad = accepted.grad;
        f = accepted.value;
        result.history.push_back(f);
        result.iterations = iter + 1;
        if (f < best_f) {
            best_f = f;
            best_x = x;
        }
    }

    result.x = result.line_search_failed ? best_x : x;
    return result;
}

Vector sgd_minimize(const Objective& objective, const Vector& x0, double eta,
                    int steps) {
    if (eta < 0.0) throw DomainError("eta must be non-negative");
    if (steps < 0) throw DomainError("steps must be non-negative");
    Vector x = x0;
    Vector grad(x.size());
    for (int i = 0; i < steps; ++i) {
        const double f = objective(x, grad);
        if (!std::isfinite(f) || !grad.allFinite())
            throw NumericError("objective non-finite at iteration " + std::to_string(i));
        x -= eta * grad;
    }
    return x;
}

Vector finite_diff_grad(const ValueFn& f, const Vector& x, double h) {
    if (!(h > 0.0)) throw DomainError("step size must be positive");
    Vector grad(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        grad(i) = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace kfan
