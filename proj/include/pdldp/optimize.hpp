#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace pdldp {

struct LbfgsOptions {
    std::size_t max_iters = 200;
    std::size_t memory = 10;
    double grad_tol = 1e-9;
    double armijo = 1e-4;
    std::size_t max_backtracks = 50;
    /// Optional projection applied to every trial point.
    std::function<void(std::vector<double>&)> project;
};

struct LbfgsReport {
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    double value = std::numeric_limits<double>::infinity();
    double grad_norm = std::numeric_limits<double>::infinity();
    bool converged = false;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace detail

/// Limited-memory BFGS with Armijo backtracking. `fg(x, grad)` returns f(x) and
/// writes the gradient; a non-finite return value makes the line search back off.
/// Deterministic: no randomness, fixed iteration budget.
template <class ValueAndGradient>
LbfgsReport minimize_lbfgs(ValueAndGradient&& fg, std::vector<double>& x, const LbfgsOptions& opt) {
    using detail::dot;
    LbfgsReport rep;
    const std::size_t n = x.size();
    if (opt.project) opt.project(x);
    std::vector<double> g(n), g_new(n), x_new(n), dir(n);
    double f = fg(x, g);
    ++rep.evaluations;
    rep.value = f;
    rep.grad_norm = std::sqrt(dot(g, g));
    if (!std::isfinite(f)) return rep;

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha(opt.memory);

    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        if (rep.grad_norm <= opt.grad_tol) {
            rep.converged = true;
            break;
        }
        // Two-loop recursion.
        dir = g;
        const std::size_t h = s_hist.size();
        for (std::size_t i = h; i-- > 0;) {
            alpha[i] = rho_hist[i] * dot(s_hist[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[i] * y_hist[i][j];
        }
        double gamma = 1.0;
        if (h > 0) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
        else gamma = 1.0 / std::max(1.0, rep.grad_norm);
        for (auto& v : dir) v *= gamma;
        for (std::size_t i = 0; i < h; ++i) {
            const double beta = rho_hist[i] * dot(y_hist[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] += s_hist[i][j] * (alpha[i] - beta);
        }
        for (auto& v : dir) v = -v;
        double slope = dot(g, dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            const double scale = 1.0 / std::max(1.0, rep.grad_norm);
            for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j] * scale;
            slope = dot(g, dir);
        }

        double step = 1.0;
        bool accepted = false;
        double f_new = f;
        for (std::size_t bt = 0; bt < opt.max_backtracks; ++bt) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * dir[j];
            if (opt.project) opt.project(x_new);
            f_new = fg(x_new, g_new);
            ++rep.evaluations;
            if (std::isfinite(f_new) && f_new <= f + opt.armijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++rep.iterations;
        if (!accepted) break;

        std::vector<double> s(n), y(n);
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = x_new[j] - x[j];
            y[j] = g_new[j] - g[j];
        }
        const double sy = dot(s, y);
        if (sy > 1e-300) {
            if (s_hist.size() == opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        const double decrease = f - f_new;
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        rep.value = f;
        rep.grad_norm = std::sqrt(dot(g, g));
        if (decrease <= 1e-16 * std::max(1.0, std::abs(f)) && rep.grad_norm <= 1e3 * opt.grad_tol) {
            rep.converged = true;
            break;
        }
    }
    if (rep.grad_norm <= opt.grad_tol) rep.converged = true;
    return rep;
}

} // namespace pdldp
