#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pdldp/coefficients.hpp"
#include "pdldp/optimize.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/sde_sim.hpp"

namespace pdldp {

/// Inputs for simulating U(t) = X(eps t) on [0, T] as a small-noise problem:
/// drift eps b(eps t, U_t), diffusion sigma(eps t, U_t), amplitude sqrt(eps),
/// driven by W^(s) = eps^{-1/2} W(eps s).
struct RescaledProblem {
    CoefficientSpec spec;
    std::vector<double> x0;
    double epsilon;
    double theta;
    TimeGrid grid;
};

inline RescaledProblem rescale_problem(const CoefficientSpec& spec, std::span<const double> x0,
                                       double epsilon, const TimeGrid& grid) {
    require(std::isfinite(epsilon) && epsilon > 0.0, "rescale_problem: epsilon must be positive");
    require(x0.size() == spec.dim_state, "rescale_problem: x0 dimension mismatch");
    CoefficientSpec scaled = spec;
    scaled.time_scale = spec.time_scale * epsilon;
    scaled.drift_factor = spec.drift_factor * epsilon;
    return {std::move(scaled), std::vector<double>(x0.begin(), x0.end()), epsilon,
            std::sqrt(epsilon), grid};
}

/// Increments of W^(s) = eps^{-1/2} W(eps s) on `rescaled_grid`, given the
/// increments of W on the original grid of horizon eps * T.
inline NoiseDraw rescale_noise(const NoiseDraw& original, double epsilon,
                               const TimeGrid& rescaled_grid) {
    require(epsilon > 0.0, "rescale_noise: epsilon must be positive");
    require(rescaled_grid.n_steps() == original.grid.n_steps(), "rescale_noise: step count mismatch");
    NoiseDraw out(rescaled_grid, original.dim());
    const double factor = 1.0 / std::sqrt(epsilon);
    for (std::size_t i = 0; i < out.increments.data().size(); ++i)
        out.increments.data()[i] = original.increments.data()[i] * factor;
    return out;
}

/// Small-time rate J(g): rate of g for the drift-free skeleton
/// phi' = sigma(t, phi_t) nu.
inline Rate small_time_rate(const CoefficientSpec& spec, std::span<const double> x0, const Path& g,
                            double tol_feas = kDefaultFeasibilityTol) {
    return rate_of_path(spec.without_drift(), x0, g, tol_feas);
}

/// C^1 functional f : R^d -> R^m with its declared Jacobian at x0.
struct FunctionalSpec {
    MapDescriptor map;               ///< in_dim = d, out_dim = m; evaluated at t = 0
    std::vector<double> jacobian_at_x0; ///< m x d, row-major

    std::size_t out_dim() const noexcept { return map.out_dim; }
    std::size_t in_dim() const noexcept { return map.in_dim; }

    void validate() const {
        map.validate();
        require(jacobian_at_x0.size() == map.out_dim * map.in_dim,
                "functional: Jacobian must be m x d");
        for (double v : jacobian_at_x0) require(std::isfinite(v), "functional: Jacobian must be finite");
    }

    /// Central-difference check of the declared Jacobian at x0.
    bool jacobian_matches(std::span<const double> x0, double rel_tol = 1e-4) const {
        const std::size_t m = out_dim(), d = in_dim();
        std::vector<double> probe(x0.begin(), x0.end());
        for (std::size_t j = 0; j < d; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(x0[j]));
            probe[j] = x0[j] + h;
            const auto up = map(0.0, probe);
            probe[j] = x0[j] - h;
            const auto down = map(0.0, probe);
            probe[j] = x0[j];
            for (std::size_t i = 0; i < m; ++i) {
                const double fd = (up[i] - down[i]) / (2.0 * h);
                const double declared = jacobian_at_x0[i * d + j];
                if (std::abs(fd - declared) > rel_tol * std::max(1.0, std::abs(declared))) return false;
            }
        }
        return true;
    }

    /// f(x) = A x for a constant m x d matrix A.
    static FunctionalSpec linear(std::size_t m, std::size_t d, std::vector<double> a) {
        FunctionalSpec f{MapDescriptor::affine(m, d, a, std::vector<double>(m, 0.0)), a};
        f.validate();
        return f;
    }
};

struct DeltaLift {
    Rate value = Rate::infinity();
    std::optional<Path> lifted_path; ///< minimizing phi when finite
};

namespace detail {

inline Eigen::MatrixXd to_eigen(std::span<const double> data, std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * cols + j];
    return out;
}

} // namespace detail

/// J^f(g) = inf { J(phi) : Df(x0) (phi(t) - x0) = g(t) for all t }, where g is
/// the displacement path of f(X(eps t)) (g(0) = 0). The range component is
/// lifted through the minimal-norm right inverse of Df(x0); null-space
/// directions are chosen per interval by a least-norm solve and, for
/// state-dependent sigma, polished by finite-difference L-BFGS.
inline DeltaLift delta_method_lift(const FunctionalSpec& fspec, const CoefficientSpec& spec,
                                   std::span<const double> x0, const Path& g,
                                   std::size_t polish_iters = 25) {
    fspec.validate();
    const std::size_t d = spec.dim_state;
    const std::size_t m = spec.dim_noise;
    const std::size_t q = fspec.out_dim();
    require(fspec.in_dim() == d, "delta_method_rate: functional input must equal dim_state");
    require(g.dim() == q, "delta_method_rate: target path dimension must equal functional output");
    require(x0.size() == d, "delta_method_rate: x0 dimension mismatch");
    for (double v : g.values.data())
        if (!std::isfinite(v)) throw NonFiniteError("delta_method_rate: non-finite target path");
    require(euclidean_norm(g.at(0)) <= 1e-9, "delta_method_rate: g(0) must be the zero displacement");

    DeltaLift out;
    const TimeGrid& grid = g.grid;
    const std::size_t n = grid.n_steps();
    const Eigen::MatrixXd D = detail::to_eigen(fspec.jacobian_at_x0, q, d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double tol = 1e-12 * std::max<double>(1.0, svd.singularValues().size() > 0
                                                         ? svd.singularValues()(0)
                                                         : 1.0);
    svd.setThreshold(tol);
    const auto rank = static_cast<std::size_t>(svd.rank());
    const Eigen::MatrixXd D_pinv = svd.solve(Eigen::MatrixXd::Identity(
        static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q)));

    // Range part p(t) = x0 + D^+ g(t); infeasible if g leaves the range of D.
    Path base(grid, d);
    for (std::size_t k = 0; k <= n; ++k) {
        Eigen::VectorXd gk(static_cast<Eigen::Index>(q));
        for (std::size_t i = 0; i < q; ++i) gk(static_cast<Eigen::Index>(i)) = g.values(k, i);
        const Eigen::VectorXd lift = D_pinv * gk;
        if ((D * lift - gk).norm() > 1e-9 * (1.0 + gk.norm())) return out;
        for (std::size_t i = 0; i < d; ++i)
            base.values(k, i) = x0[i] + lift(static_cast<Eigen::Index>(i));
    }

    const CoefficientSpec drift_free = spec.without_drift();
    const std::size_t null_dim = d - rank;
    if (null_dim == 0) {
        out.value = rate_of_path(drift_free, x0, base);
        if (out.value.is_finite()) out.lifted_path = base;
        return out;
    }

    Eigen::MatrixXd N = svd.matrixV().rightCols(static_cast<Eigen::Index>(null_dim));
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                        static_cast<Eigen::Index>(d)) -
                              N * N.transpose();

    // Greedy per-interval least-norm choice of the null-space velocity.
    const double dt = grid.dt();
    Path phi = base;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(null_dim));
    CoefficientEvaluator ev(drift_free, grid);
    ev.observe(0, phi.values);
    std::vector<double> sigma(d * m);
    for (std::size_t k = 0; k < n; ++k) {
        ev.diffusion(k, sigma);
        const Eigen::MatrixXd S = detail::to_eigen(sigma, d, m);
        Eigen::VectorXd v(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i)
            v(static_cast<Eigen::Index>(i)) = (base.values(k + 1, i) - base.values(k, i)) / dt;
        const Eigen::MatrixXd PS = P * S;
        const Eigen::VectorXd Pv = P * v;
        Eigen::VectorXd nu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        if (PS.cwiseAbs().maxCoeff() > 0.0) nu = PS.completeOrthogonalDecomposition().solve(Pv);
        if ((PS * nu - Pv).norm() > kDefaultFeasibilityTol * (1.0 + Pv.norm())) return out;
        h += N.transpose() * (S * nu - v) * dt;
        const Eigen::VectorXd nh = N * h;
        for (std::size_t i = 0; i < d; ++i)
            phi.values(k + 1, i) = base.values(k + 1, i) + nh(static_cast<Eigen::Index>(i));
        ev.observe(k + 1, phi.values);
    }
    Rate best = rate_of_path(drift_free, x0, phi);
    if (best.is_infinite()) return out;

    if (drift_free.diffusion_state_dependent() && polish_iters > 0) {
        // Variables: null-space coordinates h_k, k = 1..n (h_0 = 0).
        std::vector<double> coords(n * null_dim);
        for (std::size_t k = 1; k <= n; ++k) {
            Eigen::VectorXd diff(static_cast<Eigen::Index>(d));
            for (std::size_t i = 0; i < d; ++i)
                diff(static_cast<Eigen::Index>(i)) = phi.values(k, i) - base.values(k, i);
            const Eigen::VectorXd hk = N.transpose() * diff;
            for (std::size_t r = 0; r < null_dim; ++r)
                coords[(k - 1) * null_dim + r] = hk(static_cast<Eigen::Index>(r));
        }
        auto build = [&](const std::vector<double>& c) {
            Path p = base;
            for (std::size_t k = 1; k <= n; ++k)
                for (std::size_t i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (std::size_t r = 0; r < null_dim; ++r)
                        s += N(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) *
                             c[(k - 1) * null_dim + r];
                    p.values(k, i) += s;
                }
            return p;
        };
        auto objective = [&](const std::vector<double>& c) {
            return rate_of_path(drift_free, x0, build(c)).value();
        };
        auto fg = [&](const std::vector<double>& c, std::vector<double>& grad) {
            const double f0 = objective(c);
            grad.assign(c.size(), 0.0);
            if (!std::isfinite(f0)) return f0;
            std::vector<double> probe = c;
            for (std::size_t i = 0; i < c.size(); ++i) {
                const double step = 1e-6 * std::max(1.0, std::abs(c[i]));
                probe[i] = c[i] + step;
                const double up = objective(probe);
                probe[i] = c[i] - step;
                const double down = objective(probe);
                probe[i] = c[i];
                if (!std::isfinite(up) || !std::isfinite(down)) return std::numeric_limits<double>::infinity();
                grad[i] = (up - down) / (2.0 * step);
            }
            return f0;
        };
        LbfgsOptions lopt;
        lopt.max_iters = polish_iters;
        lopt.grad_tol = 1e-10;
        std::vector<double> trial = coords;
        minimize_lbfgs(fg, trial, lopt);
        const Path polished = build(trial);
        const Rate polished_rate = rate_of_path(drift_free, x0, polished);
        if (polished_rate.is_finite() && polished_rate.value() < best.value()) {
            best = polished_rate;
            phi = polished;
        }
    }
    out.value = best;
    out.lifted_path = phi;
    return out;
}

inline Rate delta_method_rate(const FunctionalSpec& fspec, const CoefficientSpec& spec,
                              std::span<const double> x0, const Path& g) {
    return delta_method_lift(fspec, spec, x0, g).value;
}

} // namespace pdldp
