#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "pdldp/coefficients.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/sde_sim.hpp"

namespace pdldp {

enum class EstimatorMethod { Plain, Importance };

inline const char* method_name(EstimatorMethod m) {
    return m == EstimatorMethod::Plain ? "plain" : "importance";
}

struct ProbEstimate {
    double epsilon = 0.0;
    double theta = 0.0;
    double p_hat = 0.0;
    double std_err = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_hits = 0;
    EstimatorMethod method = EstimatorMethod::Plain;
    /// One-sided 95% Clopper-Pearson upper bound, reported when n_hits == 0.
    double upper_bound = std::numeric_limits<double>::quiet_NaN();

    /// theta^2 log p_hat; -inf when p_hat == 0.
    double theta_sq_log_p() const noexcept {
        if (p_hat <= 0.0) return -std::numeric_limits<double>::infinity();
        return theta * theta * std::log(p_hat);
    }
};

/// Exact one-sided Clopper-Pearson upper bound for zero successes in n trials.
inline double zero_hit_upper_bound(std::size_t n, double alpha = 0.05) {
    return 1.0 - std::pow(alpha, 1.0 / static_cast<double>(n));
}

namespace detail {

/// Runs body(i) for i in [0, n) on up to hardware_concurrency threads with a
/// static partition. body must write only to slot i of its outputs.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, std::max<std::size_t>(1, n / 256));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Compensated (Neumaier) sum in index order.
inline double ordered_sum(std::span<const double> xs) noexcept {
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) comp += (sum - t) + x;
        else comp += (x - t) + sum;
        sum = t;
    }
    return sum + comp;
}

inline ProbEstimate summarize(std::span<const double> weights, std::size_t hits, NoiseLevel level,
                              EstimatorMethod method) {
    ProbEstimate est;
    est.epsilon = level.epsilon;
    est.theta = level.theta;
    est.n_samples = weights.size();
    est.n_hits = hits;
    est.method = method;
    const double n = static_cast<double>(weights.size());
    std::vector<double> squares(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) squares[i] = weights[i] * weights[i];
    est.p_hat = ordered_sum(weights) / n;
    const double second = ordered_sum(squares) / n;
    est.std_err = std::sqrt(std::max(0.0, second - est.p_hat * est.p_hat) / n);
    if (hits == 0) est.upper_bound = zero_hit_upper_bound(weights.size());
    return est;
}

} // namespace detail

/// Plain Monte Carlo estimate of P(X^eps in event): sample i is driven by
/// brownian_draw(grid, m, seed, i), so the result does not depend on the
/// execution order. Coefficients are taken at level.epsilon.
inline ProbEstimate estimate_event_prob(const CoefficientSpec& spec, std::span<const double> x0,
                                        NoiseLevel level, const EventSpec& event,
                                        const TimeGrid& grid, std::size_t n, std::uint64_t seed) {
    require(n >= 1, "estimate_event_prob: need at least one sample");
    event.validate(spec.dim_state);
    const CoefficientSpec eff = spec.at_epsilon(level.epsilon);
    std::vector<double> weights(n, 0.0);
    detail::parallel_for(n, [&](std::size_t i) {
        const NoiseDraw noise = brownian_draw(grid, eff.dim_noise, seed, i);
        const Path p = simulate(eff, x0, level.theta, grid, noise);
        weights[i] = event.contains(p) ? 1.0 : 0.0;
    });
    const auto hits = static_cast<std::size_t>(std::count(weights.begin(), weights.end(), 1.0));
    return detail::summarize(weights, hits, level, EstimatorMethod::Plain);
}

inline ProbEstimate estimate_event_prob(const CoefficientSpec& spec, std::span<const double> x0,
                                        double theta, const EventSpec& event, const TimeGrid& grid,
                                        std::size_t n, std::uint64_t seed) {
    return estimate_event_prob(spec, x0, NoiseLevel{theta, theta}, event, grid, n, seed);
}

/// Girsanov importance sampling: paths are simulated under the tilted drift
/// b + sigma * tilt and reweighted by exp(girsanov_log_weight(tilt, theta, dW)),
/// the likelihood ratio back to the untilted law. Unbiased for P(X^eps in event).
inline ProbEstimate importance_estimate(const CoefficientSpec& spec, std::span<const double> x0,
                                        NoiseLevel level, const EventSpec& event,
                                        const TimeGrid& grid, const Control& tilt, std::size_t n,
                                        std::uint64_t seed) {
    require(n >= 1, "importance_estimate: need at least one sample");
    require(level.theta > 0.0, "importance_estimate: theta must be positive");
    require(tilt.grid == grid && tilt.dim() == spec.dim_noise, "importance_estimate: tilt shape mismatch");
    event.validate(spec.dim_state);
    const CoefficientSpec eff = spec.at_epsilon(level.epsilon);
    std::vector<double> weights(n, 0.0);
    std::vector<unsigned char> hit(n, 0);
    detail::parallel_for(n, [&](std::size_t i) {
        const NoiseDraw noise = brownian_draw(grid, eff.dim_noise, seed, i);
        const Path p = simulate_controlled(eff, x0, level.theta, tilt, grid, noise);
        if (event.contains(p)) {
            hit[i] = 1;
            weights[i] = std::exp(girsanov_log_weight(tilt, level.theta, noise));
        }
    });
    const auto hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    return detail::summarize(weights, hits, level, EstimatorMethod::Importance);
}

inline ProbEstimate importance_estimate(const CoefficientSpec& spec, std::span<const double> x0,
                                        double theta, const EventSpec& event, const TimeGrid& grid,
                                        const Control& tilt, std::size_t n, std::uint64_t seed) {
    return importance_estimate(spec, x0, NoiseLevel{theta, theta}, event, grid, tilt, n, seed);
}

// ---------------------------------------------------------------------------
// Slope fit
// ---------------------------------------------------------------------------

struct SlopePoint {
    double theta_sq;
    double log_p;
};

struct SlopeFit {
    std::vector<SlopePoint> points;
    std::vector<double> thetas;
    std::vector<double> per_point_values; ///< theta^2 log p_hat
    double fitted_limit = 0.0;
    double fitted_slope = 0.0;
    double fitted_curvature = 0.0;
    double theory_value = 0.0;
    double rel_gap = 0.0;
};

/// Fits theta^2 log p_hat = limit + slope * theta + curvature * theta^2 over
/// the points with p_hat > 0 (the curvature term is dropped with only two
/// points) and compares the intercept with theory_value (= -inf I).
inline SlopeFit ldp_slope(std::span<const double> thetas, std::span<const double> p_hats,
                          double theory_value) {
    require(thetas.size() == p_hats.size(), "ldp_slope: thetas and estimates differ in length");
    SlopeFit fit;
    fit.theory_value = theory_value;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        if (!(p_hats[i] > 0.0)) continue;
        const double t2 = thetas[i] * thetas[i];
        const double lp = std::log(p_hats[i]);
        fit.points.push_back({t2, lp});
        fit.thetas.push_back(thetas[i]);
        fit.per_point_values.push_back(t2 * lp);
    }
    if (fit.points.size() < 2)
        throw InvalidArgument(
            "ldp_slope: fewer than two schedule points with p_hat > 0; use importance sampling "
            "for the small-noise levels");
    const auto k = static_cast<Eigen::Index>(fit.points.size());
    const Eigen::Index cols = k >= 3 ? 3 : 2;
    Eigen::MatrixXd a(k, cols);
    Eigen::VectorXd y(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double t = fit.thetas[static_cast<std::size_t>(i)];
        a(i, 0) = 1.0;
        a(i, 1) = t;
        if (cols == 3) a(i, 2) = t * t;
        y(i) = fit.per_point_values[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    fit.fitted_limit = c(0);
    fit.fitted_slope = c(1);
    fit.fitted_curvature = cols == 3 ? c(2) : 0.0;
    fit.rel_gap = std::abs(fit.fitted_limit - theory_value) / std::max(std::abs(theory_value), 1e-12);
    return fit;
}

inline SlopeFit ldp_slope(const SmallNoiseSchedule& schedule, std::span<const ProbEstimate> estimates,
                          const RateResult& theory) {
    require(estimates.size() == schedule.size(), "ldp_slope: one estimate per schedule point required");
    require(theory.value.is_finite(), "ldp_slope: theory rate must be finite");
    std::vector<double> thetas, ps;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        thetas.push_back(schedule[i].theta);
        ps.push_back(estimates[i].p_hat);
    }
    return ldp_slope(thetas, ps, -theory.value.value());
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline constexpr const char* kEstimateCsvHeader =
    "epsilon,theta,n,n_hits,p_hat,std_err,theta_sq_log_p,method";

inline std::string estimate_csv_row(const ProbEstimate& e) {
    return format_double(e.epsilon) + "," + format_double(e.theta) + "," +
           std::to_string(e.n_samples) + "," + std::to_string(e.n_hits) + "," +
           format_double(e.p_hat) + "," + format_double(e.std_err) + "," +
           format_double(e.theta_sq_log_p()) + "," + method_name(e.method);
}

} // namespace pdldp
