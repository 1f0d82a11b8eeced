#pragma once

#include <cmath>
#include <span>

#include "pdldp/coefficients.hpp"
#include "pdldp/grid.hpp"
#include "pdldp/sde_sim.hpp"

namespace pdldp {

/// Explicit Euler solution of the skeleton equation
///   phi' = b(t, phi_t) + sigma(t, phi_t) nu(t),  phi(0) = x0.
/// Same arithmetic as simulate_controlled with theta = 0.
inline Path solve_skeleton(const CoefficientSpec& spec, std::span<const double> x0,
                           const Control& nu, const TimeGrid& grid) {
    return detail::euler_integrate(spec, x0, grid, &nu, 0.0, nullptr);
}

/// Uncontrolled flow phi' = b(t, phi_t).
inline Path solve_uncontrolled(const CoefficientSpec& spec, std::span<const double> x0,
                               const TimeGrid& grid) {
    return detail::euler_integrate(spec, x0, grid, nullptr, 0.0, nullptr);
}

/// A priori bound on sup_{s<=t} |phi(s)|^2:
///   (3|x0|^2 + 9 M^2 t (t + |nu|^2) + 3 M^2 t^3 (t + |nu|^2)) exp(9 M^2 (t + |nu|^2)),
/// where |nu|^2 is the squared L2 norm of the control (not its energy).
inline double growth_bound_value(std::span<const double> x0, double growth_const, double t,
                                 double nu_norm_sq) {
    require(growth_const >= 0.0 && t >= 0.0 && nu_norm_sq >= 0.0,
            "growth_bound_value: arguments must be nonnegative");
    double x0_sq = 0.0;
    for (double v : x0) x0_sq += v * v;
    const double m2 = growth_const * growth_const;
    const double budget = t + nu_norm_sq;
    return (3.0 * x0_sq + 9.0 * m2 * t * budget + 3.0 * m2 * t * t * t * budget) *
           std::exp(9.0 * m2 * budget);
}

/// max_k |phi(t_k)|^2
inline double sup_norm_sq(const Path& p) {
    double best = 0.0;
    for (std::size_t k = 0; k < p.values.rows(); ++k) {
        double sq = 0.0;
        for (double v : p.values.row(k)) sq += v * v;
        best = std::max(best, sq);
    }
    return best;
}

} // namespace pdldp
