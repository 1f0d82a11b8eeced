#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdldp/coefficients.hpp"
#include "pdldp/errors.hpp"
#include "pdldp/grid.hpp"
#include "pdldp/optimize.hpp"
#include "pdldp/skeleton.hpp"

namespace pdldp {

// ---------------------------------------------------------------------------
// Rate values with an explicit infinity
// ---------------------------------------------------------------------------

/// Nonnegative rate value or +infinity (inf over the empty set).
class Rate {
public:
    static Rate finite(double v) { return Rate(v, false); }
    static Rate infinity() { return Rate(0.0, true); }

    bool is_infinite() const noexcept { return infinite_; }
    bool is_finite() const noexcept { return !infinite_; }

    /// The finite value; +inf for infinite rates.
    double value() const noexcept {
        return infinite_ ? std::numeric_limits<double>::infinity() : value_;
    }

    friend bool operator==(const Rate&, const Rate&) = default;

private:
    Rate(double v, bool inf) : value_(v), infinite_(inf) {}
    double value_;
    bool infinite_;
};

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class EventKind { TerminalPoint, TerminalHalfSpace, TerminalBall, SupNormExceed };

/// Closed set of paths, evaluated on grid points.
struct EventSpec {
    EventKind kind = EventKind::TerminalPoint;
    std::vector<double> point;  ///< target a, normal w, or ball center
    double scalar = 0.0;        ///< tol, c, radius, or level

    static EventSpec terminal_point(std::vector<double> a, double tol) {
        return make(EventKind::TerminalPoint, std::move(a), tol);
    }
    static EventSpec terminal_half_space(std::vector<double> w, double c) {
        return make(EventKind::TerminalHalfSpace, std::move(w), c);
    }
    static EventSpec terminal_ball(std::vector<double> center, double radius) {
        return make(EventKind::TerminalBall, std::move(center), radius);
    }
    static EventSpec sup_norm_exceed(double level) {
        return make(EventKind::SupNormExceed, {}, level);
    }

    void validate(std::size_t dim) const {
        for (double v : point) require(std::isfinite(v), "event: parameters must be finite");
        require(std::isfinite(scalar), "event: parameters must be finite");
        switch (kind) {
        case EventKind::TerminalPoint:
            require(point.size() == dim, "event: target dimension mismatch");
            require(scalar >= 0.0, "event: terminal point tolerance must be >= 0");
            break;
        case EventKind::TerminalHalfSpace:
            require(point.size() == dim, "event: normal dimension mismatch");
            require(euclidean_norm(point) > 0.0, "event: half-space normal must be nonzero");
            break;
        case EventKind::TerminalBall:
            require(point.size() == dim, "event: center dimension mismatch");
            require(scalar > 0.0, "event: ball radius must be positive");
            break;
        case EventKind::SupNormExceed:
            require(scalar > 0.0, "event: sup-norm level must be positive");
            break;
        }
    }

    bool contains(const Path& p) const {
        const auto end = p.terminal();
        switch (kind) {
        case EventKind::TerminalPoint: return distance(end, point) <= scalar;
        case EventKind::TerminalHalfSpace: return inner(point, end) >= scalar;
        case EventKind::TerminalBall: return distance(end, point) <= scalar;
        case EventKind::SupNormExceed:
            for (std::size_t k = 0; k < p.values.rows(); ++k)
                if (euclidean_norm(p.values.row(k)) >= scalar) return true;
            return false;
        }
        return false;
    }

    static double inner(std::span<const double> a, std::span<const double> b) noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
    static double distance(std::span<const double> a, std::span<const double> b) noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    }

private:
    static EventSpec make(EventKind kind, std::vector<double> p, double s) {
        EventSpec e;
        e.kind = kind;
        e.point = std::move(p);
        e.scalar = s;
        return e;
    }
};

inline const char* event_name(EventKind kind) {
    switch (kind) {
    case EventKind::TerminalPoint: return "terminal_point";
    case EventKind::TerminalHalfSpace: return "terminal_half_space";
    case EventKind::TerminalBall: return "terminal_ball";
    case EventKind::SupNormExceed: return "sup_norm_exceed";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Energy and inversion of the skeleton map
// ---------------------------------------------------------------------------

/// 1/2 sum_k |nu_k|^2 dt
inline double control_energy(const Control& nu) { return 0.5 * nu.norm_sq(); }

/// Outcome of inverting the skeleton equation for a target path.
struct ControlInversion {
    bool feasible = false;
    Control control;
    std::size_t bad_interval = 0; ///< first interval that failed, when infeasible
    std::string diagnostic;
};

inline constexpr double kDefaultFeasibilityTol = 1e-6;

/// Per-interval minimal-norm control reproducing g under the Euler skeleton:
/// nu_k = sigma_k^+ r_k with r_k = (g_{k+1} - g_k)/dt - b(t_k, g_{.<=k}).
/// Infeasible when some |sigma_k nu_k - r_k| > tol_feas (1 + |r_k|) or g(0) != x0.
inline ControlInversion control_for_path(const CoefficientSpec& spec, std::span<const double> x0,
                                         const Path& g, double tol_feas = kDefaultFeasibilityTol) {
    const std::size_t d = spec.dim_state;
    const std::size_t m = spec.dim_noise;
    require(g.dim() == d && x0.size() == d, "control_for_path: dimension mismatch");
    for (double v : g.values.data())
        if (!std::isfinite(v)) throw NonFiniteError("control_for_path: target path has non-finite entries");
    for (double v : x0)
        if (!std::isfinite(v)) throw NonFiniteError("control_for_path: x0 must be finite");

    const TimeGrid& grid = g.grid;
    ControlInversion out{false, Control(grid, m), 0, {}};
    const double start_gap = EventSpec::distance(g.at(0), x0);
    if (start_gap > 1e-9 * (1.0 + euclidean_norm(x0))) {
        out.diagnostic = "target path does not start at x0 (gap " + std::to_string(start_gap) + ")";
        return out;
    }

    CoefficientEvaluator ev(spec, grid);
    ev.observe(0, g.values);
    std::vector<double> b(d), sigma(d * m);
    Eigen::MatrixXd S(d, m);
    Eigen::VectorXd r(d);
    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        ev.drift(k, b);
        ev.diffusion(k, sigma);
        for (std::size_t i = 0; i < d; ++i) {
            r(static_cast<Eigen::Index>(i)) = (g.values(k + 1, i) - g.values(k, i)) / dt - b[i];
            for (std::size_t j = 0; j < m; ++j)
                S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma[i * m + j];
        }
        Eigen::VectorXd nu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        if (S.cwiseAbs().maxCoeff() > 0.0) nu = S.completeOrthogonalDecomposition().solve(r);
        const double unresolved = (S * nu - r).norm();
        if (!(unresolved <= tol_feas * (1.0 + r.norm()))) {
            out.bad_interval = k;
            out.diagnostic = "target unreachable on interval " + std::to_string(k) +
                             " (unresolved residual " + std::to_string(unresolved) + ")";
            return out;
        }
        for (std::size_t j = 0; j < m; ++j) out.control.values(k, j) = nu(static_cast<Eigen::Index>(j));
        ev.observe(k + 1, g.values);
    }
    out.feasible = true;
    return out;
}

/// I(g): energy of the minimal-norm control reproducing g, or +inf.
inline Rate rate_of_path(const CoefficientSpec& spec, std::span<const double> x0, const Path& g,
                         double tol_feas = kDefaultFeasibilityTol) {
    const auto inv = control_for_path(spec, x0, g, tol_feas);
    if (!inv.feasible) return Rate::infinity();
    return Rate::finite(control_energy(inv.control));
}

// ---------------------------------------------------------------------------
// Gradients of path functionals with respect to the control
// ---------------------------------------------------------------------------

/// Reverse-mode derivative of a scalar functional F(phi) of the skeleton path
/// with respect to the control, given dF/dphi (rows 0..n, shape (n+1) x d).
/// `path` must be solve_skeleton(spec, x0, nu, grid). Exact for the discrete
/// Euler map; RunningMax uses the subgradient at the recorded argmax.
inline RowMatrix skeleton_adjoint(const CoefficientSpec& spec, const Path& path, const Control& nu,
                                  RowMatrix seed) {
    const TimeGrid& grid = path.grid;
    const std::size_t n = grid.n_steps();
    const std::size_t d = spec.dim_state;
    const std::size_t m = spec.dim_noise;
    const std::size_t F = spec.feature_dim();
    const std::size_t nf = spec.features.size();
    require(seed.rows() == n + 1 && seed.cols() == d, "skeleton_adjoint: seed shape mismatch");

    // Replay the tracker to recover the features and running argmax per step.
    FeatureTracker tracker(spec, grid);
    RowMatrix z(n, F);
    std::vector<std::size_t> argmax(n * d);
    for (std::size_t k = 0; k < n; ++k) {
        tracker.observe(k, path.values);
        const auto zk = tracker.features();
        std::copy(zk.begin(), zk.end(), z.row(k).begin());
        for (std::size_t i = 0; i < d; ++i) argmax[k * d + i] = tracker.argmax(i);
    }

    const double dt = grid.dt();
    const double dt_orig = dt * spec.time_scale;
    std::vector<double> sigma(d * m), jb(d * F), js(d * m * F), weights(d * m), v(F);
    std::vector<double> scratch(std::max({spec.drift.jacobian_scratch(),
                                          spec.diffusion.jacobian_scratch(),
                                          spec.diffusion.eval_scratch()}));
    RowMatrix grad(n, m);
    std::vector<double> acc_int(d, 0.0), pend_int(d, 0.0), acc_avg(d, 0.0), pend_avg(d, 0.0);

    for (std::size_t k = n; k-- > 0;) {
        for (std::size_t i = 0; i < d; ++i) {
            seed(k + 1, i) += acc_int[i] + acc_avg[i];
            acc_int[i] += pend_int[i];
            acc_avg[i] += pend_avg[i];
            pend_int[i] = 0.0;
            pend_avg[i] = 0.0;
        }
        const auto a = seed.row(k + 1);
        const auto zk = z.row(k);
        const double t = grid.time(k) * spec.time_scale;
        spec.diffusion.eval(t, zk, sigma, scratch.data());
        const bool controlled = !detail::row_is_zero(nu.values.row(k));

        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += sigma[i * m + j] * a[i];
            grad(k, j) = s * dt;
        }

        std::fill(v.begin(), v.end(), 0.0);
        spec.drift.jacobian(t, zk, jb, scratch.data());
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t q = 0; q < F; ++q) v[q] += spec.drift_factor * jb[i * F + q] * a[i];
        if (controlled && !spec.diffusion.input_independent()) {
            spec.diffusion.jacobian(t, zk, js, scratch.data());
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < m; ++j) weights[i * m + j] = a[i] * nu.values(k, j);
            for (std::size_t r = 0; r < d * m; ++r)
                for (std::size_t q = 0; q < F; ++q) v[q] += js[r * F + q] * weights[r];
        }
        for (auto& x : v) x *= dt;

        for (std::size_t i = 0; i < d; ++i) seed(k, i) += a[i];
        for (std::size_t f = 0; f < nf; ++f) {
            for (std::size_t i = 0; i < d; ++i) {
                const double w = v[f * d + i];
                if (w == 0.0) continue;
                switch (spec.features[f].kind) {
                case FeatureKind::CurrentValue: seed(k, i) += w; break;
                case FeatureKind::RunningMax: seed(argmax[k * d + i], i) += w; break;
                case FeatureKind::LaggedValue: seed(tracker.lag_index(k, f), i) += w; break;
                case FeatureKind::RunningIntegral: pend_int[i] += w * dt_orig; break;
                case FeatureKind::RunningAverage:
                    if (k == 0) seed(0, i) += w;
                    else pend_avg[i] += w / static_cast<double>(k);
                    break;
                }
            }
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Event-rate minimization
// ---------------------------------------------------------------------------

enum class GradientMethod { Adjoint, FiniteDifference };

struct OptimizerConfig {
    std::size_t max_outer = 30;        ///< penalty / multiplier updates
    std::size_t max_inner_iters = 300; ///< L-BFGS iterations per outer step
    double penalty_initial = 10.0;
    double penalty_growth = 10.0;
    double penalty_max = 1e8;
    double grad_tol = 1e-9;
    double feas_tol = 1e-7;
    GradientMethod gradient = GradientMethod::Adjoint;
    double fd_step = 1e-6; ///< relative central-difference step
    std::size_t lbfgs_memory = 12;
    std::optional<double> max_energy; ///< project onto {energy <= N} when set
};

struct RateResult {
    Rate value = Rate::infinity();
    Control minimizer_control;
    Path minimizer_path;
    std::size_t iterations = 0;
    double final_gradient_norm = 0.0;
    double feasibility_residual = 0.0;
    bool converged = false;
    std::string diagnostic;
};

namespace detail {

/// Constraint residuals of an event on a path. Equality for TerminalPoint
/// (one residual per component), a single inequality c(phi) <= 0 otherwise.
struct EventConstraint {
    const EventSpec& event;

    bool is_equality() const noexcept { return event.kind == EventKind::TerminalPoint; }

    std::vector<double> residuals(const Path& p) const {
        const auto end = p.terminal();
        switch (event.kind) {
        case EventKind::TerminalPoint: {
            std::vector<double> r(end.size());
            for (std::size_t i = 0; i < end.size(); ++i) r[i] = end[i] - event.point[i];
            return r;
        }
        case EventKind::TerminalHalfSpace: return {event.scalar - EventSpec::inner(event.point, end)};
        case EventKind::TerminalBall: return {EventSpec::distance(end, event.point) - event.scalar};
        case EventKind::SupNormExceed: {
            double best = 0.0;
            for (std::size_t k = 0; k < p.values.rows(); ++k)
                best = std::max(best, euclidean_norm(p.values.row(k)));
            return {event.scalar - best};
        }
        }
        return {};
    }

    /// Adds sum_c weight_c * d residual_c / d phi into seed.
    void add_gradient(const Path& p, std::span<const double> weight, RowMatrix& seed) const {
        const std::size_t n = p.values.rows() - 1;
        const auto end = p.terminal();
        switch (event.kind) {
        case EventKind::TerminalPoint:
            for (std::size_t i = 0; i < end.size(); ++i) seed(n, i) += weight[i];
            return;
        case EventKind::TerminalHalfSpace:
            for (std::size_t i = 0; i < end.size(); ++i) seed(n, i) -= weight[0] * event.point[i];
            return;
        case EventKind::TerminalBall: {
            const double dist = EventSpec::distance(end, event.point);
            if (dist == 0.0) return;
            for (std::size_t i = 0; i < end.size(); ++i)
                seed(n, i) += weight[0] * (end[i] - event.point[i]) / dist;
            return;
        }
        case EventKind::SupNormExceed: {
            std::size_t best_k = 0;
            double best = -1.0;
            for (std::size_t k = 0; k < p.values.rows(); ++k) {
                const double nk = euclidean_norm(p.values.row(k));
                if (nk > best) {
                    best = nk;
                    best_k = k;
                }
            }
            if (best <= 0.0) return;
            for (std::size_t i = 0; i < p.dim(); ++i)
                seed(best_k, i) -= weight[0] * p.values(best_k, i) / best;
            return;
        }
        }
    }

    double violation(const std::vector<double>& r) const {
        if (is_equality()) return euclidean_norm(r);
        return std::max(0.0, r[0]);
    }
};

/// Point of the event closest to `end` (straight-line initialization target).
inline std::vector<double> nearest_target(const EventSpec& e, std::span<const double> end) {
    std::vector<double> out(end.begin(), end.end());
    switch (e.kind) {
    case EventKind::TerminalPoint: return e.point;
    case EventKind::TerminalHalfSpace: {
        const double gap = e.scalar - EventSpec::inner(e.point, end);
        const double wn = EventSpec::inner(e.point, e.point);
        if (gap > 0.0)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += gap * e.point[i] / wn;
        return out;
    }
    case EventKind::TerminalBall: {
        const double dist = EventSpec::distance(end, e.point);
        if (dist <= e.scalar) return out;
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = e.point[i] + e.scalar * (end[i] - e.point[i]) / dist;
        return out;
    }
    case EventKind::SupNormExceed: {
        const double nrm = euclidean_norm(end);
        if (nrm >= e.scalar) return out;
        if (nrm > 0.0) {
            for (auto& v : out) v *= e.scalar / nrm;
        } else {
            std::fill(out.begin(), out.end(), 0.0);
            out[0] = e.scalar;
        }
        return out;
    }
    }
    return out;
}

} // namespace detail

/// Gradient of F(phi) = sum seed . phi w.r.t. nu by central finite differences.
/// Costs 2 n m skeleton solves; used as the independent check of the adjoint.
inline RowMatrix skeleton_fd_gradient(const CoefficientSpec& spec, std::span<const double> x0,
                                      const Control& nu,
                                      const std::function<double(const Path&)>& functional,
                                      double rel_step = 1e-6) {
    RowMatrix grad(nu.values.rows(), nu.dim());
    Control probe = nu;
    for (std::size_t k = 0; k < nu.values.rows(); ++k) {
        for (std::size_t j = 0; j < nu.dim(); ++j) {
            const double base = nu.values(k, j);
            const double h = rel_step * std::max(1.0, std::abs(base));
            probe.values(k, j) = base + h;
            const double up = functional(solve_skeleton(spec, x0, probe, nu.grid));
            probe.values(k, j) = base - h;
            const double down = functional(solve_skeleton(spec, x0, probe, nu.grid));
            probe.values(k, j) = base;
            grad(k, j) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

/// inf { energy(nu) : solve_skeleton(nu) in event } over piecewise-constant
/// controls, by an augmented-Lagrangian penalty method with L-BFGS inner
/// solves. Deterministic: initialization is the minimal-norm control of the
/// straight line from x0 to the event point nearest the uncontrolled endpoint.
inline RateResult min_rate_event(const CoefficientSpec& spec, std::span<const double> x0,
                                 const EventSpec& event, const TimeGrid& grid,
                                 const OptimizerConfig& opt = {}) {
    spec.validate();
    event.validate(spec.dim_state);
    const std::size_t n = grid.n_steps();
    const std::size_t m = spec.dim_noise;
    const std::size_t d = spec.dim_state;
    const double dt = grid.dt();
    const double root_dt = std::sqrt(dt);
    const detail::EventConstraint constraint{event};

    RateResult res{Rate::infinity(), Control(grid, m), Path(grid, d), 0, 0.0, 0.0, false, {}};

    const Path free_flow = solve_uncontrolled(spec, x0, grid);
    {
        const auto r0 = constraint.residuals(free_flow);
        if (event.contains(free_flow) || constraint.violation(r0) <= opt.feas_tol) {
            res.value = Rate::finite(0.0);
            res.minimizer_path = free_flow;
            res.feasibility_residual = constraint.violation(r0);
            res.converged = true;
            res.diagnostic = "uncontrolled flow already satisfies the event";
            return res;
        }
    }

    // Initial control.
    Control nu(grid, m);
    {
        const auto target = detail::nearest_target(event, free_flow.terminal());
        const Path line = straight_line(grid, x0, target);
        const auto inv = control_for_path(spec, x0, line);
        if (inv.feasible) {
            nu = inv.control;
        } else {
            // Unreachable straight line (sigma not onto): take one linearized
            // step of <w, phi(T)> toward the target, w the unit direction to it.
            std::vector<double> w(target);
            for (std::size_t i = 0; i < d; ++i) w[i] -= free_flow.terminal()[i];
            const double gap = euclidean_norm(w);
            RowMatrix seed(n + 1, d);
            for (std::size_t i = 0; i < d; ++i) seed(n, i) = w[i] / gap;
            const RowMatrix g = skeleton_adjoint(spec, free_flow, nu, std::move(seed));
            double g_sq = 0.0;
            for (double v : g.data()) g_sq += v * v;
            if (g_sq > 0.0) {
                const double alpha = gap / (g_sq / dt);
                for (std::size_t i = 0; i < g.data().size(); ++i) nu.values.data()[i] = alpha * g.data()[i] / dt;
            }
        }
    }

    // Optimization variable u = nu * sqrt(dt), so energy = |u|^2 / 2.
    std::vector<double> u(n * m);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = nu.values.data()[i] * root_dt;

    const std::size_t n_con = constraint.is_equality() ? d : 1;
    std::vector<double> lambda(n_con, 0.0);
    double mu = opt.penalty_initial;

    auto unpack = [&](const std::vector<double>& x, Control& c) {
        for (std::size_t i = 0; i < x.size(); ++i) c.values.data()[i] = x[i] / root_dt;
    };

    Control work(grid, m);
    auto lagrangian = [&](const std::vector<double>& x, std::vector<double>& g) -> double {
        unpack(x, work);
        Path phi(grid, d);
        try {
            phi = solve_skeleton(spec, x0, work, grid);
        } catch (const DivergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
        const auto r = constraint.residuals(phi);
        double value = 0.0;
        for (double xi : x) value += 0.5 * xi * xi;
        std::vector<double> dLdr(n_con);
        if (constraint.is_equality()) {
            for (std::size_t c = 0; c < n_con; ++c) {
                value += lambda[c] * r[c] + 0.5 * mu * r[c] * r[c];
                dLdr[c] = lambda[c] + mu * r[c];
            }
        } else {
            const double shifted = std::max(0.0, r[0] + lambda[0] / mu);
            value += 0.5 * mu * shifted * shifted - lambda[0] * lambda[0] / (2.0 * mu);
            dLdr[0] = mu * shifted;
        }
        RowMatrix grad_nu;
        if (opt.gradient == GradientMethod::Adjoint) {
            RowMatrix seed(n + 1, d);
            constraint.add_gradient(phi, dLdr, seed);
            grad_nu = skeleton_adjoint(spec, phi, work, std::move(seed));
        } else {
            auto penalty = [&](const Path& p) {
                const auto rr = constraint.residuals(p);
                double s = 0.0;
                if (constraint.is_equality()) {
                    for (std::size_t c = 0; c < n_con; ++c)
                        s += lambda[c] * rr[c] + 0.5 * mu * rr[c] * rr[c];
                } else {
                    const double sh = std::max(0.0, rr[0] + lambda[0] / mu);
                    s = 0.5 * mu * sh * sh;
                }
                return s;
            };
            grad_nu = skeleton_fd_gradient(spec, x0, work, penalty, opt.fd_step);
        }
        g.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] + grad_nu.data()[i] / root_dt;
        return value;
    };

    LbfgsOptions lopt;
    lopt.max_iters = opt.max_inner_iters;
    lopt.memory = opt.lbfgs_memory;
    lopt.grad_tol = opt.grad_tol;
    if (opt.max_energy) {
        const double cap = std::sqrt(2.0 * *opt.max_energy);
        lopt.project = [cap](std::vector<double>& x) {
            const double nrm = std::sqrt(detail::dot(x, x));
            if (nrm > cap)
                for (auto& v : x) v *= cap / nrm;
        };
    }

    double violation = std::numeric_limits<double>::infinity();
    double last_grad = 0.0;
    std::size_t total_iters = 0;
    bool inner_ok = false;
    for (std::size_t outer = 0; outer < opt.max_outer; ++outer) {
        const auto rep = minimize_lbfgs(lagrangian, u, lopt);
        total_iters += rep.iterations;
        last_grad = rep.grad_norm;
        inner_ok = rep.converged;

        unpack(u, work);
        Path phi = solve_skeleton(spec, x0, work, grid);
        const auto r = constraint.residuals(phi);
        const double viol = constraint.violation(r);
        if (constraint.is_equality()) {
            for (std::size_t c = 0; c < n_con; ++c) lambda[c] += mu * r[c];
        } else {
            lambda[0] = std::max(0.0, lambda[0] + mu * r[0]);
        }
        if (viol > 0.25 * violation) mu = std::min(mu * opt.penalty_growth, opt.penalty_max);
        violation = viol;
        if (viol <= opt.feas_tol && inner_ok) break;
    }

    unpack(u, res.minimizer_control);
    res.minimizer_path = solve_skeleton(spec, x0, res.minimizer_control, grid);
    res.feasibility_residual = constraint.violation(constraint.residuals(res.minimizer_path));
    res.iterations = total_iters;
    res.final_gradient_norm = last_grad;
    res.converged = inner_ok && res.feasibility_residual <= opt.feas_tol;
    if (res.feasibility_residual <= std::max(opt.feas_tol, 1e-6)) {
        res.value = Rate::finite(control_energy(res.minimizer_control));
        if (!res.converged) res.diagnostic = "feasible but inner solver did not reach grad_tol";
    } else {
        res.value = Rate::infinity();
        res.diagnostic = "event not reached: feasibility residual " +
                         std::to_string(res.feasibility_residual);
    }
    return res;
}

} // namespace pdldp
