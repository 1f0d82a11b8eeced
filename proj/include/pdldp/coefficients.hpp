#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdldp/errors.hpp"
#include "pdldp/grid.hpp"
#include "pdldp/rng.hpp"

namespace pdldp {

// ---------------------------------------------------------------------------
// Path features
// ---------------------------------------------------------------------------

enum class FeatureKind { CurrentValue, RunningMax, RunningIntegral, RunningAverage, LaggedValue };

/// A non-anticipative functional of the stopped path, applied componentwise.
/// Each feature contributes `dim_state` entries to the feature vector.
struct PathFeature {
    FeatureKind kind = FeatureKind::CurrentValue;
    double lag = 0.0; ///< LaggedValue only, in (original) time units.

    static PathFeature current() { return {FeatureKind::CurrentValue, 0.0}; }
    static PathFeature running_max() { return {FeatureKind::RunningMax, 0.0}; }
    static PathFeature running_integral() { return {FeatureKind::RunningIntegral, 0.0}; }
    static PathFeature running_average() { return {FeatureKind::RunningAverage, 0.0}; }
    static PathFeature lagged(double lag) {
        require(std::isfinite(lag) && lag >= 0.0, "LaggedValue: lag must be nonnegative");
        return {FeatureKind::LaggedValue, lag};
    }

    friend bool operator==(const PathFeature&, const PathFeature&) = default;
};

inline const char* feature_name(FeatureKind kind) {
    switch (kind) {
    case FeatureKind::CurrentValue: return "current";
    case FeatureKind::RunningMax: return "running_max";
    case FeatureKind::RunningIntegral: return "running_integral";
    case FeatureKind::RunningAverage: return "running_average";
    case FeatureKind::LaggedValue: return "lagged";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Map descriptors: (t, z) -> R^out
// ---------------------------------------------------------------------------

/// Declarative description of a smooth map (t, z) -> R^out_dim.
///
///   Affine:    A z + c + t e
///   Tanh:      s .* tanh(A z + c + t e) + h
///   Logistic:  s .* logistic(A z + c + t e) + h
///   Product:   left(t, z) .* right(t, z)
///   Sum:       left(t, z) + right(t, z)
///
/// Matrices are row-major, out_dim x in_dim. Diffusion maps produce the d x m
/// matrix flattened row-major.
struct MapDescriptor {
    enum class Kind { Affine, Tanh, Logistic, Product, Sum };

    Kind kind = Kind::Affine;
    std::size_t out_dim = 0;
    std::size_t in_dim = 0;
    std::vector<double> linear;    // out x in
    std::vector<double> offset;    // out
    std::vector<double> time_coef; // out
    std::vector<double> scale;     // out, sigmoid kinds
    std::vector<double> shift;     // out, sigmoid kinds
    std::vector<MapDescriptor> children;

    static MapDescriptor affine(std::size_t out, std::size_t in, std::vector<double> linear,
                                std::vector<double> offset, std::vector<double> time_coef = {}) {
        MapDescriptor m;
        m.kind = Kind::Affine;
        m.out_dim = out;
        m.in_dim = in;
        m.linear = std::move(linear);
        m.offset = std::move(offset);
        m.time_coef = time_coef.empty() ? std::vector<double>(out, 0.0) : std::move(time_coef);
        m.validate();
        return m;
    }

    static MapDescriptor constant(std::vector<double> value, std::size_t in) {
        const std::size_t out = value.size();
        return affine(out, in, std::vector<double>(out * in, 0.0), std::move(value));
    }

    static MapDescriptor zero(std::size_t out, std::size_t in) {
        return constant(std::vector<double>(out, 0.0), in);
    }

    static MapDescriptor sigmoid(Kind kind, std::size_t out, std::size_t in,
                                 std::vector<double> linear, std::vector<double> offset,
                                 std::vector<double> scale, std::vector<double> shift,
                                 std::vector<double> time_coef = {}) {
        require(kind == Kind::Tanh || kind == Kind::Logistic, "sigmoid: kind must be Tanh or Logistic");
        MapDescriptor m = affine(out, in, std::move(linear), std::move(offset), std::move(time_coef));
        m.kind = kind;
        m.scale = std::move(scale);
        m.shift = std::move(shift);
        m.validate();
        return m;
    }

    static MapDescriptor product(MapDescriptor left, MapDescriptor right) {
        return combine(Kind::Product, std::move(left), std::move(right));
    }

    static MapDescriptor sum(MapDescriptor left, MapDescriptor right) {
        return combine(Kind::Sum, std::move(left), std::move(right));
    }

    void validate() const {
        switch (kind) {
        case Kind::Affine:
        case Kind::Tanh:
        case Kind::Logistic: {
            require(linear.size() == out_dim * in_dim, "map: linear part must be out_dim x in_dim");
            require(offset.size() == out_dim, "map: offset must have out_dim entries");
            require(time_coef.size() == out_dim, "map: time_coef must have out_dim entries");
            if (kind != Kind::Affine) {
                require(scale.size() == out_dim, "map: scale must have out_dim entries");
                require(shift.size() == out_dim, "map: shift must have out_dim entries");
            }
            auto finite = [](const std::vector<double>& v) {
                return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
            };
            require(finite(linear) && finite(offset) && finite(time_coef) && finite(scale) &&
                        finite(shift),
                    "map: coefficients must be finite");
            break;
        }
        case Kind::Product:
        case Kind::Sum:
            require(children.size() == 2, "map: composite needs two children");
            for (const auto& c : children) {
                require(c.out_dim == out_dim && c.in_dim == in_dim,
                        "map: composite children must share dimensions");
                c.validate();
            }
            break;
        }
    }

    /// Multiplies the map output by `factor`.
    MapDescriptor scaled(double factor) const {
        MapDescriptor m = *this;
        switch (kind) {
        case Kind::Affine:
            for (auto& v : m.linear) v *= factor;
            for (auto& v : m.offset) v *= factor;
            for (auto& v : m.time_coef) v *= factor;
            break;
        case Kind::Tanh:
        case Kind::Logistic:
            for (auto& v : m.scale) v *= factor;
            for (auto& v : m.shift) v *= factor;
            break;
        case Kind::Product: m.children[0] = children[0].scaled(factor); break;
        case Kind::Sum:
            m.children[0] = children[0].scaled(factor);
            m.children[1] = children[1].scaled(factor);
            break;
        }
        return m;
    }

    /// True when the output does not depend on z.
    bool input_independent() const {
        switch (kind) {
        case Kind::Affine:
        case Kind::Tanh:
        case Kind::Logistic:
            return std::all_of(linear.begin(), linear.end(), [](double x) { return x == 0.0; });
        case Kind::Product:
        case Kind::Sum:
            return children[0].input_independent() && children[1].input_independent();
        }
        return false;
    }

    bool is_affine() const {
        if (kind == Kind::Affine) return true;
        if (kind == Kind::Sum) return children[0].is_affine() && children[1].is_affine();
        if (kind == Kind::Product)
            return (children[0].input_independent() && children[1].is_affine()) ||
                   (children[1].input_independent() && children[0].is_affine());
        return input_independent();
    }

    /// Scratch doubles needed by eval().
    std::size_t eval_scratch() const {
        if (kind == Kind::Product || kind == Kind::Sum)
            return out_dim + std::max(children[0].eval_scratch(), children[1].eval_scratch());
        return 0;
    }

    /// Scratch doubles needed by jacobian().
    std::size_t jacobian_scratch() const {
        const std::size_t block = out_dim * in_dim;
        switch (kind) {
        case Kind::Affine: return 0;
        case Kind::Tanh:
        case Kind::Logistic: return 0;
        case Kind::Sum:
            return block + std::max(children[0].jacobian_scratch(), children[1].jacobian_scratch());
        case Kind::Product: {
            std::size_t child = 0;
            for (const auto& c : children)
                child = std::max({child, c.jacobian_scratch(), c.eval_scratch()});
            return 2 * out_dim + 2 * block + child;
        }
        }
        return 0;
    }

    void eval(double t, std::span<const double> z, std::span<double> out, double* scratch) const {
        switch (kind) {
        case Kind::Affine:
            pre_activation(t, z, out);
            return;
        case Kind::Tanh:
            pre_activation(t, z, out);
            for (std::size_t i = 0; i < out_dim; ++i) out[i] = scale[i] * std::tanh(out[i]) + shift[i];
            return;
        case Kind::Logistic:
            pre_activation(t, z, out);
            for (std::size_t i = 0; i < out_dim; ++i)
                out[i] = scale[i] * logistic(out[i]) + shift[i];
            return;
        case Kind::Product:
        case Kind::Sum: {
            std::span<double> tmp(scratch, out_dim);
            children[0].eval(t, z, out, scratch + out_dim);
            children[1].eval(t, z, tmp, scratch + out_dim);
            if (kind == Kind::Product)
                for (std::size_t i = 0; i < out_dim; ++i) out[i] *= tmp[i];
            else
                for (std::size_t i = 0; i < out_dim; ++i) out[i] += tmp[i];
            return;
        }
        }
    }

    /// d out / d z, written row-major (out_dim x in_dim) into `jac`.
    void jacobian(double t, std::span<const double> z, std::span<double> jac, double* scratch) const {
        switch (kind) {
        case Kind::Affine:
            std::copy(linear.begin(), linear.end(), jac.begin());
            return;
        case Kind::Tanh:
        case Kind::Logistic: {
            for (std::size_t i = 0; i < out_dim; ++i) {
                double u = offset[i] + t * time_coef[i];
                for (std::size_t j = 0; j < in_dim; ++j) u += linear[i * in_dim + j] * z[j];
                double slope = 0.0;
                if (kind == Kind::Tanh) {
                    const double th = std::tanh(u);
                    slope = 1.0 - th * th;
                } else {
                    const double s = logistic(u);
                    slope = s * (1.0 - s);
                }
                for (std::size_t j = 0; j < in_dim; ++j)
                    jac[i * in_dim + j] = scale[i] * slope * linear[i * in_dim + j];
            }
            return;
        }
        case Kind::Sum: {
            const std::size_t block = out_dim * in_dim;
            std::span<double> tmp(scratch, block);
            children[0].jacobian(t, z, jac, scratch + block);
            children[1].jacobian(t, z, tmp, scratch + block);
            for (std::size_t i = 0; i < block; ++i) jac[i] += tmp[i];
            return;
        }
        case Kind::Product: {
            const std::size_t block = out_dim * in_dim;
            std::span<double> lv(scratch, out_dim);
            std::span<double> rv(scratch + out_dim, out_dim);
            std::span<double> lj(scratch + 2 * out_dim, block);
            std::span<double> rj(scratch + 2 * out_dim + block, block);
            double* rest = scratch + 2 * out_dim + 2 * block;
            children[0].eval(t, z, lv, rest);
            children[1].eval(t, z, rv, rest);
            children[0].jacobian(t, z, lj, rest);
            children[1].jacobian(t, z, rj, rest);
            for (std::size_t i = 0; i < out_dim; ++i)
                for (std::size_t j = 0; j < in_dim; ++j)
                    jac[i * in_dim + j] = lj[i * in_dim + j] * rv[i] + lv[i] * rj[i * in_dim + j];
            return;
        }
        }
    }

    /// Convenience overload that allocates its own scratch.
    std::vector<double> operator()(double t, std::span<const double> z) const {
        std::vector<double> out(out_dim), scratch(eval_scratch());
        eval(t, z, out, scratch.data());
        return out;
    }

private:
    static double logistic(double u) noexcept { return 1.0 / (1.0 + std::exp(-u)); }

    static MapDescriptor combine(Kind kind, MapDescriptor left, MapDescriptor right) {
        require(left.out_dim == right.out_dim && left.in_dim == right.in_dim,
                "map: composite children must share dimensions");
        MapDescriptor m;
        m.kind = kind;
        m.out_dim = left.out_dim;
        m.in_dim = left.in_dim;
        m.children.push_back(std::move(left));
        m.children.push_back(std::move(right));
        return m;
    }

    void pre_activation(double t, std::span<const double> z, std::span<double> out) const {
        for (std::size_t i = 0; i < out_dim; ++i) {
            double acc = offset[i] + t * time_coef[i];
            const double* row = linear.data() + i * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * z[j];
            out[i] = acc;
        }
    }
};

// ---------------------------------------------------------------------------
// Coefficient specification
// ---------------------------------------------------------------------------

/// Optional epsilon dependence: b_eps = b + eps * drift_perturbation,
/// sigma_eps = sigma + eps * diffusion_perturbation. Both vanish at eps -> 0.
struct EpsilonFamily {
    MapDescriptor drift_perturbation;
    MapDescriptor diffusion_perturbation;
};

struct LipschitzEntry {
    double radius;
    double constant;
};

/// Path-dependent coefficient pair (b, sigma) with declared regularity constants.
///
/// The maps receive the feature vector z = (f_1(x_t), ..., f_p(x_t)), each
/// feature applied to every state component, so in_dim = dim_state * p.
/// `time_scale` and `drift_factor` implement the small-time rescaling: maps are
/// evaluated at original time time_scale * t, time integrals and lags are
/// measured in original time, and the drift is multiplied by drift_factor.
struct CoefficientSpec {
    std::string name;
    std::size_t dim_state = 1;
    std::size_t dim_noise = 1;
    std::vector<PathFeature> features{PathFeature::current()};
    MapDescriptor drift;
    MapDescriptor diffusion;
    double growth_const = 1.0;
    std::vector<LipschitzEntry> lipschitz_table;
    std::optional<EpsilonFamily> epsilon_family;
    double time_scale = 1.0;
    double drift_factor = 1.0;

    std::size_t feature_dim() const noexcept { return dim_state * features.size(); }

    void validate() const {
        require(dim_state >= 1 && dim_noise >= 1, "spec: dimensions must be positive");
        require(!features.empty(), "spec: at least one path feature required");
        require(drift.out_dim == dim_state, "spec: drift output must have dim_state entries");
        require(diffusion.out_dim == dim_state * dim_noise,
                "spec: diffusion output must have dim_state*dim_noise entries");
        require(drift.in_dim == feature_dim() && diffusion.in_dim == feature_dim(),
                "spec: map input dimension must equal dim_state * #features");
        drift.validate();
        diffusion.validate();
        require(std::isfinite(growth_const) && growth_const > 0.0, "spec: growth constant M must be positive");
        for (const auto& e : lipschitz_table)
            require(e.radius > 0.0 && e.constant >= 0.0, "spec: Lipschitz table entries must be positive");
        require(time_scale > 0.0 && std::isfinite(time_scale), "spec: time_scale must be positive");
        require(std::isfinite(drift_factor), "spec: drift_factor must be finite");
        if (epsilon_family) {
            require(epsilon_family->drift_perturbation.out_dim == drift.out_dim &&
                        epsilon_family->drift_perturbation.in_dim == drift.in_dim,
                    "spec: epsilon drift perturbation shape mismatch");
            require(epsilon_family->diffusion_perturbation.out_dim == diffusion.out_dim &&
                        epsilon_family->diffusion_perturbation.in_dim == diffusion.in_dim,
                    "spec: epsilon diffusion perturbation shape mismatch");
        }
    }

    /// L_R for the smallest tabulated radius >= R; +inf if none covers R.
    double lipschitz_at(double radius) const {
        double best = std::numeric_limits<double>::infinity();
        double best_radius = std::numeric_limits<double>::infinity();
        for (const auto& e : lipschitz_table)
            if (e.radius >= radius && e.radius < best_radius) {
                best_radius = e.radius;
                best = e.constant;
            }
        return best;
    }

    /// The coefficients (b_eps, sigma_eps). Without a family this is *this.
    CoefficientSpec at_epsilon(double eps) const {
        require(eps >= 0.0, "at_epsilon: epsilon must be nonnegative");
        CoefficientSpec out = *this;
        if (epsilon_family && eps > 0.0) {
            out.drift = MapDescriptor::sum(drift, epsilon_family->drift_perturbation.scaled(eps));
            out.diffusion =
                MapDescriptor::sum(diffusion, epsilon_family->diffusion_perturbation.scaled(eps));
        }
        out.epsilon_family.reset();
        return out;
    }

    CoefficientSpec without_drift() const {
        CoefficientSpec out = *this;
        out.drift = MapDescriptor::zero(dim_state, feature_dim());
        out.epsilon_family.reset();
        return out;
    }

    bool diffusion_state_dependent() const { return !diffusion.input_independent(); }
};

enum class CoeffKind { Drift, Diffusion };

// ---------------------------------------------------------------------------
// Feature tracking
// ---------------------------------------------------------------------------

/// Incremental evaluator of the feature vector along a path being built row by
/// row. observe(k, history) must be called for k = 0, 1, 2, ... in order, after
/// row k of `history` has been written; it reads only rows <= k.
class FeatureTracker {
public:
    FeatureTracker(const CoefficientSpec& spec, const TimeGrid& grid)
        : features_(spec.features), dim_(spec.dim_state), dt_orig_(grid.dt() * spec.time_scale),
          z_(spec.feature_dim()), run_max_(dim_), argmax_(dim_), integral_(dim_),
          integral_before_(dim_) {
        lag_steps_.reserve(features_.size());
        for (const auto& f : features_)
            lag_steps_.push_back(f.kind == FeatureKind::LaggedValue ? f.lag / dt_orig_ : 0.0);
    }

    void observe(std::size_t k, const RowMatrix& history) {
        const auto x = history.row(k);
        for (std::size_t i = 0; i < dim_; ++i) {
            if (k == 0 || x[i] > run_max_[i]) {
                run_max_[i] = x[i];
                argmax_[i] = k;
            }
            if (k == 0) integral_[i] = 0.0;
            integral_before_[i] = integral_[i];
            integral_[i] += x[i] * dt_orig_;
        }
        for (std::size_t f = 0; f < features_.size(); ++f) {
            double* out = z_.data() + f * dim_;
            switch (features_[f].kind) {
            case FeatureKind::CurrentValue:
                for (std::size_t i = 0; i < dim_; ++i) out[i] = x[i];
                break;
            case FeatureKind::RunningMax:
                for (std::size_t i = 0; i < dim_; ++i) out[i] = run_max_[i];
                break;
            case FeatureKind::RunningIntegral:
                for (std::size_t i = 0; i < dim_; ++i) out[i] = integral_before_[i];
                break;
            case FeatureKind::RunningAverage:
                if (k == 0) {
                    for (std::size_t i = 0; i < dim_; ++i) out[i] = x[i];
                } else {
                    const double elapsed = static_cast<double>(k) * dt_orig_;
                    for (std::size_t i = 0; i < dim_; ++i) out[i] = integral_before_[i] / elapsed;
                }
                break;
            case FeatureKind::LaggedValue: {
                const auto row = history.row(lag_index(k, f));
                for (std::size_t i = 0; i < dim_; ++i) out[i] = row[i];
                break;
            }
            }
        }
        for (double v : z_)
            if (!std::isfinite(v))
                throw NonFiniteError("non-finite path feature at grid index " + std::to_string(k));
    }

    std::span<const double> features() const noexcept { return z_; }

    /// Grid index of the running maximum of component i after the last observe().
    std::size_t argmax(std::size_t i) const noexcept { return argmax_[i]; }

    /// Nearest grid index <= t_k - lag for feature f; 0 when t_k - lag < 0.
    std::size_t lag_index(std::size_t k, std::size_t f) const noexcept {
        const double pos = static_cast<double>(k) - lag_steps_[f];
        if (pos <= 0.0) return 0;
        // Tolerance absorbs lag/dt landing a rounding error below an integer.
        return std::min(k, static_cast<std::size_t>(std::floor(pos + 1e-9)));
    }

    const std::vector<PathFeature>& feature_list() const noexcept { return features_; }

private:
    std::vector<PathFeature> features_;
    std::size_t dim_;
    double dt_orig_;
    std::vector<double> lag_steps_;
    std::vector<double> z_;
    std::vector<double> run_max_;
    std::vector<std::size_t> argmax_;
    std::vector<double> integral_;
    std::vector<double> integral_before_;
};

/// Per-run evaluator of b and sigma along a path under construction. Owns the
/// feature tracker and map scratch; not shareable between threads.
class CoefficientEvaluator {
public:
    CoefficientEvaluator(const CoefficientSpec& spec, const TimeGrid& grid)
        : spec_(spec), grid_(grid), tracker_(spec, grid),
          scratch_(std::max(spec.drift.eval_scratch(), spec.diffusion.eval_scratch())) {}

    /// Ingest row k of `history` (rows 0..k must be final).
    void observe(std::size_t k, const RowMatrix& history) { tracker_.observe(k, history); }

    /// Coefficient time argument for grid index k.
    double map_time(std::size_t k) const noexcept { return grid_.time(k) * spec_.time_scale; }

    void drift(std::size_t k, std::span<double> out) {
        spec_.drift.eval(map_time(k), tracker_.features(), out, scratch_.data());
        if (spec_.drift_factor != 1.0)
            for (auto& v : out) v *= spec_.drift_factor;
    }

    void diffusion(std::size_t k, std::span<double> out) {
        spec_.diffusion.eval(map_time(k), tracker_.features(), out, scratch_.data());
    }

    const FeatureTracker& tracker() const noexcept { return tracker_; }

private:
    const CoefficientSpec& spec_;
    TimeGrid grid_;
    FeatureTracker tracker_;
    std::vector<double> scratch_;
};

/// Coefficient value at t_k using only rows 0..k of `prefix`. Drift returns d
/// entries; diffusion returns the d x m matrix flattened row-major.
inline std::vector<double> eval_coeff(const CoefficientSpec& spec, CoeffKind which, std::size_t k,
                                      const Path& prefix) {
    if (k >= prefix.values.rows())
        throw InvalidArgument("eval_coeff: grid index " + std::to_string(k) +
                              " outside prefix of length " + std::to_string(prefix.values.rows()));
    require(prefix.dim() == spec.dim_state, "eval_coeff: path dimension does not match spec");
    CoefficientEvaluator ev(spec, prefix.grid);
    for (std::size_t j = 0; j <= k; ++j) ev.observe(j, prefix.values);
    std::vector<double> out(which == CoeffKind::Drift ? spec.dim_state
                                                      : spec.dim_state * spec.dim_noise);
    if (which == CoeffKind::Drift)
        ev.drift(k, out);
    else
        ev.diffusion(k, out);
    for (double v : out)
        if (!std::isfinite(v)) throw NonFiniteError("eval_coeff: non-finite coefficient value");
    return out;
}

// ---------------------------------------------------------------------------
// Spot checks of the declared constants
// ---------------------------------------------------------------------------

struct SpotCheckResult {
    bool ok = true;
    std::size_t n_checked = 0;
    std::size_t n_violations = 0;
    double worst_ratio = 0.0; ///< max over samples of lhs / rhs
};

namespace detail {

/// Random path with sup-norm at most `radius`: a scaled random walk.
inline Path random_bounded_path(const TimeGrid& grid, std::size_t dim, double radius,
                                StreamRng& rng) {
    Path p(grid, dim);
    double sup = 0.0;
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 0; k < grid.n_points(); ++k) {
        for (std::size_t i = 0; i < dim; ++i) {
            if (k > 0) x[i] += rng.normal() * std::sqrt(grid.dt());
            p.values(k, i) = x[i];
        }
        sup = std::max(sup, euclidean_norm(p.values.row(k)));
    }
    const double target = radius * rng.uniform();
    const double factor = sup > 0.0 ? target / sup : 0.0;
    for (auto& v : p.values.data()) v *= factor;
    return p;
}

inline double running_sup(const Path& p, std::size_t k) {
    double s = 0.0;
    for (std::size_t j = 0; j <= k; ++j) s = std::max(s, euclidean_norm(p.values.row(j)));
    return s;
}

} // namespace detail

/// Samples (t, omega) with sup|omega| <= radius and checks
/// |b(t,omega)| + |sigma(t,omega)|_F <= M (1 + sup_{s<=t}|omega(s)| + |t|).
inline SpotCheckResult check_growth(const CoefficientSpec& spec, const TimeGrid& grid,
                                    std::size_t n_samples, double radius, std::uint64_t seed) {
    SpotCheckResult res;
    StreamRng rng(seed, 0x67726f77u);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Path p = detail::random_bounded_path(grid, spec.dim_state, radius, rng);
        const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(grid.n_points()));
        const auto b = eval_coeff(spec, CoeffKind::Drift, k, p);
        const auto sig = eval_coeff(spec, CoeffKind::Diffusion, k, p);
        const double lhs = euclidean_norm(b) + euclidean_norm(sig);
        const double t = grid.time(k) * spec.time_scale;
        const double rhs = spec.growth_const * (1.0 + detail::running_sup(p, k) + std::abs(t));
        res.worst_ratio = std::max(res.worst_ratio, lhs / rhs);
        ++res.n_checked;
        if (lhs > rhs * (1.0 + 1e-12)) {
            ++res.n_violations;
            res.ok = false;
        }
    }
    return res;
}

/// Samples pairs (omega, omega') inside the ball of radius R and checks
/// |b - b'| + |sigma - sigma'|_F <= L_R sup_{s<=t}|omega(s) - omega'(s)|.
inline SpotCheckResult check_lipschitz(const CoefficientSpec& spec, const TimeGrid& grid,
                                       std::size_t n_samples, double radius, std::uint64_t seed) {
    SpotCheckResult res;
    const double lip = spec.lipschitz_at(radius);
    StreamRng rng(seed, 0x6c697073u);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Path p = detail::random_bounded_path(grid, spec.dim_state, radius, rng);
        Path q = p;
        // Nearby or independent partner, both inside the ball.
        if (s % 2 == 0) {
            const Path r = detail::random_bounded_path(grid, spec.dim_state, radius, rng);
            const double w = rng.uniform();
            for (std::size_t i = 0; i < q.values.data().size(); ++i)
                q.values.data()[i] = (1.0 - w) * p.values.data()[i] + w * r.values.data()[i];
        } else {
            const Path r = detail::random_bounded_path(grid, spec.dim_state, radius, rng);
            q = r;
        }
        const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(grid.n_points()));
        double dist = 0.0;
        for (std::size_t j = 0; j <= k; ++j) {
            double sq = 0.0;
            for (std::size_t i = 0; i < spec.dim_state; ++i) {
                const double d = p.values(j, i) - q.values(j, i);
                sq += d * d;
            }
            dist = std::max(dist, std::sqrt(sq));
        }
        const auto b1 = eval_coeff(spec, CoeffKind::Drift, k, p);
        const auto b2 = eval_coeff(spec, CoeffKind::Drift, k, q);
        const auto s1 = eval_coeff(spec, CoeffKind::Diffusion, k, p);
        const auto s2 = eval_coeff(spec, CoeffKind::Diffusion, k, q);
        double db = 0.0, ds = 0.0;
        for (std::size_t i = 0; i < b1.size(); ++i) db += (b1[i] - b2[i]) * (b1[i] - b2[i]);
        for (std::size_t i = 0; i < s1.size(); ++i) ds += (s1[i] - s2[i]) * (s1[i] - s2[i]);
        const double lhs = std::sqrt(db) + std::sqrt(ds);
        const double rhs = lip * dist;
        ++res.n_checked;
        if (rhs > 0.0) res.worst_ratio = std::max(res.worst_ratio, lhs / rhs);
        if (lhs > rhs * (1.0 + 1e-12) + 1e-14) {
            ++res.n_violations;
            res.ok = false;
        }
    }
    return res;
}

} // namespace pdldp
