#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pdldp/coefficients.hpp"
#include "pdldp/errors.hpp"
#include "pdldp/grid.hpp"
#include "pdldp/rng.hpp"

namespace pdldp {

/// Brownian increments on a grid: row k is W(t_{k+1}) - W(t_k), shape n_steps x m.
struct NoiseDraw {
    NoiseDraw(TimeGrid g, std::size_t m) : grid(g), increments(g.n_steps(), m) {}

    std::size_t dim() const noexcept { return increments.cols(); }

    TimeGrid grid;
    RowMatrix increments;
};

/// Noise for sample `stream` of a run seeded with `seed`.
inline NoiseDraw brownian_draw(const TimeGrid& grid, std::size_t m, std::uint64_t seed,
                               std::uint64_t stream) {
    require(m >= 1, "brownian_draw: noise dimension must be positive");
    NoiseDraw draw(grid, m);
    StreamRng rng(seed, stream);
    const double sd = std::sqrt(grid.dt());
    for (auto& v : draw.increments.data()) v = rng.normal() * sd;
    return draw;
}

struct NoiseLevel {
    double epsilon;
    double theta; ///< noise amplitude at this epsilon
};

/// Sequence of (epsilon, theta_epsilon) with theta strictly decreasing to 0.
class SmallNoiseSchedule {
public:
    explicit SmallNoiseSchedule(std::vector<NoiseLevel> levels) : levels_(std::move(levels)) {
        require(!levels_.empty(), "schedule: at least one level required");
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            require(std::isfinite(levels_[i].theta) && levels_[i].theta > 0.0,
                    "schedule: theta must be positive");
            if (i > 0)
                require(levels_[i].theta < levels_[i - 1].theta,
                        "schedule: theta must be strictly decreasing");
        }
    }

    /// Schedule with epsilon = theta.
    static SmallNoiseSchedule from_thetas(std::span<const double> thetas) {
        std::vector<NoiseLevel> levels;
        for (double t : thetas) levels.push_back({t, t});
        return SmallNoiseSchedule(std::move(levels));
    }

    const std::vector<NoiseLevel>& levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return levels_.size(); }
    const NoiseLevel& operator[](std::size_t i) const { return levels_[i]; }

private:
    std::vector<NoiseLevel> levels_;
};

/// |X_k| beyond this raises DivergenceError.
inline constexpr double kDivergenceThreshold = 1e12;

namespace detail {

inline bool row_is_zero(std::span<const double> row) noexcept {
    for (double v : row)
        if (v != 0.0) return false;
    return true;
}

/// Left-point Euler scheme shared by every integrator:
///   X_{k+1} = X_k + [b + sigma nu_k] dt + theta sigma dW_k.
/// A null control or a zero control row skips the sigma nu term, and theta == 0
/// or a null noise skips the stochastic term, so degenerate cases reproduce
/// the simpler schemes bit for bit.
inline Path euler_integrate(const CoefficientSpec& spec, std::span<const double> x0,
                            const TimeGrid& grid, const Control* nu, double theta,
                            const NoiseDraw* noise) {
    const std::size_t d = spec.dim_state;
    const std::size_t m = spec.dim_noise;
    require(x0.size() == d, "integrate: x0 dimension does not match spec");
    for (double v : x0) require(std::isfinite(v), "integrate: x0 must be finite");
    require(std::isfinite(theta) && theta >= 0.0, "integrate: theta must be >= 0");
    if (nu) {
        require(nu->grid == grid, "integrate: control grid does not match");
        require(nu->dim() == m, "integrate: control dimension must equal dim_noise");
    }
    const bool stochastic = noise != nullptr && theta > 0.0;
    if (noise) {
        require(noise->grid == grid, "integrate: noise grid does not match");
        require(noise->dim() == m, "integrate: noise dimension must equal dim_noise");
    }

    Path path(grid, d);
    for (std::size_t i = 0; i < d; ++i) path.values(0, i) = x0[i];
    CoefficientEvaluator ev(spec, grid);
    ev.observe(0, path.values);

    std::vector<double> b(d), sigma(d * m);
    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const bool controlled = nu && !row_is_zero(nu->values.row(k));
        ev.drift(k, b);
        if (controlled || stochastic) ev.diffusion(k, sigma);
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double rate = b[i];
            if (controlled) {
                double push = 0.0;
                for (std::size_t j = 0; j < m; ++j) push += sigma[i * m + j] * nu->values(k, j);
                rate = rate + push;
            }
            double next = path.values(k, i) + rate * dt;
            if (stochastic) {
                double shock = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    shock += sigma[i * m + j] * noise->increments(k, j);
                next = next + theta * shock;
            }
            path.values(k + 1, i) = next;
            sq += next * next;
        }
        const double mag = std::sqrt(sq);
        if (!std::isfinite(mag) || mag > kDivergenceThreshold) throw DivergenceError(k + 1, mag);
        ev.observe(k + 1, path.values);
    }
    return path;
}

} // namespace detail

/// Euler-Maruyama path of dX = b dt + theta sigma dW, X_0 = x0.
inline Path simulate(const CoefficientSpec& spec, std::span<const double> x0, double theta,
                     const TimeGrid& grid, const NoiseDraw& noise) {
    return detail::euler_integrate(spec, x0, grid, nullptr, theta, &noise);
}

/// Euler-Maruyama path of the controlled equation
/// dX = [b + sigma nu] dt + theta sigma dW.
inline Path simulate_controlled(const CoefficientSpec& spec, std::span<const double> x0,
                                double theta, const Control& nu, const TimeGrid& grid,
                                const NoiseDraw& noise) {
    return detail::euler_integrate(spec, x0, grid, &nu, theta, &noise);
}

/// log of the Girsanov density
///   -(1/theta) sum_i sum_k nu_i(t_k) dW_i,k - (1/(2 theta^2)) sum_k |nu(t_k)|^2 dt.
/// Evaluated on the increments of the Brownian motion driving the tilted path,
/// exp(log_weight) is the likelihood ratio dP/dP~ that makes tilted samples
/// unbiased for the untilted law.
inline double girsanov_log_weight(const Control& nu, double theta, const NoiseDraw& noise) {
    require(std::isfinite(theta) && theta > 0.0, "girsanov_log_weight: theta must be positive");
    require(nu.grid == noise.grid && nu.dim() == noise.dim(),
            "girsanov_log_weight: control and noise shapes differ");
    double stochastic = 0.0;
    double energy = 0.0;
    const double dt = nu.grid.dt();
    for (std::size_t k = 0; k < nu.values.rows(); ++k) {
        double sq = 0.0;
        for (std::size_t i = 0; i < nu.dim(); ++i) {
            stochastic += nu.values(k, i) * noise.increments(k, i);
            sq += nu.values(k, i) * nu.values(k, i);
        }
        energy += sq * dt;
    }
    return -stochastic / theta - energy / (2.0 * theta * theta);
}

} // namespace pdldp
