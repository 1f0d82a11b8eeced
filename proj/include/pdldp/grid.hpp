#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pdldp/errors.hpp"

namespace pdldp {

/// Uniform grid t_k = k*dt on [0, horizon].
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
        require(std::isfinite(horizon) && horizon > 0.0, "TimeGrid: horizon must be positive");
        require(n_steps > 0, "TimeGrid: n_steps must be positive");
        dt_ = horizon / static_cast<double>(n_steps);
    }

    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_points() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt_; }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
        return a.horizon_ == b.horizon_ && a.n_steps_ == b.n_steps_;
    }

private:
    double horizon_;
    std::size_t n_steps_;
    double dt_;
};

/// Dense row-major matrix of doubles. Rows are time indices for paths and controls.
class RowMatrix {
public:
    RowMatrix() = default;
    RowMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const RowMatrix&, const RowMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Discretized trajectory: row k is the state at t_k, shape (n_steps+1) x d.
struct Path {
    Path(TimeGrid g, std::size_t dim) : grid(g), values(g.n_points(), dim) {}
    Path(TimeGrid g, RowMatrix v) : grid(g), values(std::move(v)) {
        require(values.rows() == grid.n_points(), "Path: row count must be n_steps+1");
    }

    std::size_t dim() const noexcept { return values.cols(); }
    std::span<const double> at(std::size_t k) const noexcept { return values.row(k); }
    std::span<const double> terminal() const noexcept { return values.row(values.rows() - 1); }

    TimeGrid grid;
    RowMatrix values;
};

/// Piecewise-constant control: row k holds nu on [t_k, t_{k+1}), shape n_steps x m.
struct Control {
    Control(TimeGrid g, std::size_t dim) : grid(g), values(g.n_steps(), dim) {}
    Control(TimeGrid g, RowMatrix v) : grid(g), values(std::move(v)) {
        require(values.rows() == grid.n_steps(), "Control: row count must be n_steps");
    }

    std::size_t dim() const noexcept { return values.cols(); }

    /// Squared L2 norm, sum_k |nu_k|^2 dt.
    double norm_sq() const noexcept {
        double acc = 0.0;
        for (std::size_t k = 0; k < values.rows(); ++k) {
            double row = 0.0;
            for (double v : values.row(k)) row += v * v;
            acc += row * grid.dt();
        }
        return acc;
    }

    TimeGrid grid;
    RowMatrix values;
};

/// Path of a straight line from `from` at t=0 to `to` at t=horizon.
inline Path straight_line(const TimeGrid& grid, std::span<const double> from,
                          std::span<const double> to) {
    require(from.size() == to.size(), "straight_line: dimension mismatch");
    Path p(grid, from.size());
    for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(grid.n_steps());
        for (std::size_t i = 0; i < from.size(); ++i)
            p.values(k, i) = from[i] + s * (to[i] - from[i]);
    }
    return p;
}

inline double sup_distance(const Path& a, const Path& b) {
    require(a.values.rows() == b.values.rows() && a.dim() == b.dim(),
            "sup_distance: shape mismatch");
    double best = 0.0;
    for (std::size_t k = 0; k < a.values.rows(); ++k) {
        double sq = 0.0;
        for (std::size_t i = 0; i < a.dim(); ++i) {
            const double diff = a.values(k, i) - b.values(k, i);
            sq += diff * diff;
        }
        best = std::max(best, std::sqrt(sq));
    }
    return best;
}

inline double euclidean_norm(std::span<const double> v) noexcept {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

} // namespace pdldp
