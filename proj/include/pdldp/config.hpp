#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdldp/builtin_specs.hpp"
#include "pdldp/coefficients.hpp"
#include "pdldp/errors.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/sde_sim.hpp"
#include "pdldp/small_time.hpp"

namespace pdldp {

using json = nlohmann::json;

enum class Mode { Simulate, Skeleton, Rate, Verify, SmallTime, Delta };

inline const char* mode_name(Mode m) {
    switch (m) {
    case Mode::Simulate: return "simulate";
    case Mode::Skeleton: return "skeleton";
    case Mode::Rate: return "rate";
    case Mode::Verify: return "verify";
    case Mode::SmallTime: return "smalltime";
    case Mode::Delta: return "delta";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::Simulate, Mode::Skeleton, Mode::Rate, Mode::Verify, Mode::SmallTime, Mode::Delta})
        if (s == mode_name(m)) return m;
    throw ConfigError("mode: unknown mode '" + s +
                      "' (expected simulate, skeleton, rate, verify, smalltime or delta)");
}

enum class McMethod { Plain, Importance, Both, Auto };

struct McConfig {
    std::size_t n_samples = 10000;
    std::uint64_t seed = 1;
    McMethod method = McMethod::Plain;
    std::size_t min_hits = 10; ///< Auto: fall back to importance sampling below this
};

/// Target path: straight line from the start point to `end`, or explicit rows.
struct TargetConfig {
    std::optional<std::vector<double>> end;
    std::optional<RowMatrix> values;

    Path build(const TimeGrid& grid, std::span<const double> start) const {
        if (end) {
            require(end->size() == start.size(), "target.end: dimension mismatch");
            return straight_line(grid, start, *end);
        }
        require(values->rows() == grid.n_points(), "target.values: need n_steps+1 rows");
        require(values->cols() == start.size(), "target.values: dimension mismatch");
        return Path(grid, *values);
    }
};

struct ExperimentConfig {
    std::optional<Mode> mode;
    CoefficientSpec spec;
    std::vector<double> x0;
    TimeGrid grid{1.0, 1};
    std::vector<NoiseLevel> schedule;
    std::optional<EventSpec> event;
    OptimizerConfig optimizer;
    McConfig mc;
    std::optional<TargetConfig> target;
    std::optional<FunctionalSpec> functional;
    std::string output_dir = "pdldp_out";
    /// Configuration as written, with defaults filled in (output_dir excluded).
    json resolved;
};

namespace config_detail {

class Reader {
public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail("expected an object");
    }

    void allow_only(std::initializer_list<const char*> keys) const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            bool known = false;
            for (const char* k : keys)
                if (it.key() == k) known = true;
            if (!known) throw ConfigError(join(it.key()) + ": unknown key");
        }
    }

    bool has(const char* key) const { return node_.contains(key); }

    const json& at(const char* key) const {
        if (!node_.contains(key)) throw ConfigError(join(key) + ": missing required field");
        return node_.at(key);
    }

    double number(const char* key) const {
        const json& v = at(key);
        if (!v.is_number()) throw ConfigError(join(key) + ": expected a number");
        return v.get<double>();
    }

    double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t integer(const char* key) const {
        const json& v = at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
            throw ConfigError(join(key) + ": expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    std::uint64_t integer_or(const char* key, std::uint64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    std::string string(const char* key) const {
        const json& v = at(key);
        if (!v.is_string()) throw ConfigError(join(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::vector<double> vector(const char* key) const { return to_vector(at(key), join(key)); }

    /// Matrix given as nested rows; returned row-major with its shape.
    RowMatrix matrix(const char* key) const { return to_matrix(at(key), join(key)); }

    Reader child(const char* key) const { return Reader(at(key), join(key)); }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string& path() const { return path_; }
    const json& node() const { return node_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError((path_.empty() ? std::string("config") : path_) + ": " + msg);
    }

    static std::vector<double> to_vector(const json& v, const std::string& where) {
        if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(where + ": expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    static RowMatrix to_matrix(const json& v, const std::string& where) {
        if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
        const bool nested = v.front().is_array();
        if (!nested) {
            const auto row = to_vector(v, where);
            RowMatrix m(1, row.size());
            for (std::size_t j = 0; j < row.size(); ++j) m(0, j) = row[j];
            return m;
        }
        const std::size_t cols = v.front().size();
        RowMatrix m(v.size(), cols);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto row = to_vector(v[i], where + "[" + std::to_string(i) + "]");
            if (row.size() != cols) throw ConfigError(where + ": rows must have equal length");
            for (std::size_t j = 0; j < cols; ++j) m(i, j) = row[j];
        }
        return m;
    }

private:
    const json& node_;
    std::string path_;
};

inline std::vector<double> expect_shape(const RowMatrix& m, std::size_t rows, std::size_t cols,
                                        const std::string& where) {
    // Nested rows or a flat array; only the entry count is checked.
    if (m.rows() * m.cols() != rows * cols)
        throw ConfigError(where + ": expected " + std::to_string(rows) + " x " + std::to_string(cols) +
                          " entries");
    return m.data();
}

inline MapDescriptor parse_map(const Reader& r, std::size_t out, std::size_t in) {
    const std::string kind = r.string("kind");
    auto vec_or = [&](const char* key, std::size_t n, double fill) {
        if (!r.has(key)) return std::vector<double>(n, fill);
        auto v = r.vector(key);
        if (v.size() != n)
            throw ConfigError(r.join(key) + ": expected " + std::to_string(n) + " entries");
        return v;
    };
    auto linear = [&]() {
        if (!r.has("linear")) return std::vector<double>(out * in, 0.0);
        return expect_shape(r.matrix("linear"), out, in, r.join("linear"));
    };
    if (kind == "constant") {
        r.allow_only({"kind", "value"});
        const auto v = expect_shape(r.matrix("value"), out, 1, r.join("value"));
        return MapDescriptor::constant(v, in);
    }
    if (kind == "affine") {
        r.allow_only({"kind", "linear", "offset", "time"});
        return MapDescriptor::affine(out, in, linear(), vec_or("offset", out, 0.0),
                                     vec_or("time", out, 0.0));
    }
    if (kind == "tanh" || kind == "logistic") {
        r.allow_only({"kind", "linear", "offset", "time", "scale", "shift"});
        return MapDescriptor::sigmoid(kind == "tanh" ? MapDescriptor::Kind::Tanh
                                                     : MapDescriptor::Kind::Logistic,
                                      out, in, linear(), vec_or("offset", out, 0.0),
                                      vec_or("scale", out, 1.0), vec_or("shift", out, 0.0),
                                      vec_or("time", out, 0.0));
    }
    if (kind == "product" || kind == "sum") {
        r.allow_only({"kind", "left", "right"});
        auto left = parse_map(r.child("left"), out, in);
        auto right = parse_map(r.child("right"), out, in);
        return kind == "product" ? MapDescriptor::product(std::move(left), std::move(right))
                                 : MapDescriptor::sum(std::move(left), std::move(right));
    }
    throw ConfigError(r.join("kind") + ": unknown map kind '" + kind +
                      "' (expected constant, affine, tanh, logistic, product or sum)");
}

inline PathFeature parse_feature(const json& v, const std::string& where) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "current") return PathFeature::current();
        if (s == "running_max") return PathFeature::running_max();
        if (s == "running_integral") return PathFeature::running_integral();
        if (s == "running_average") return PathFeature::running_average();
        throw ConfigError(where + ": unknown feature '" + s + "'");
    }
    if (v.is_object() && v.size() == 1 && v.contains("lagged") && v["lagged"].is_number())
        return PathFeature::lagged(v["lagged"].get<double>());
    throw ConfigError(where + ": expected a feature name or {\"lagged\": <lag>}");
}

inline CoefficientSpec parse_spec(const Reader& r) {
    if (r.has("builtin")) {
        r.allow_only({"builtin"});
        try {
            return builtin::by_name(r.string("builtin"));
        } catch (const InvalidArgument& e) {
            throw ConfigError(r.join("builtin") + ": " + e.what());
        }
    }
    r.allow_only({"name", "dim_state", "dim_noise", "features", "drift", "diffusion", "growth_const",
                  "lipschitz", "epsilon_family"});
    CoefficientSpec s;
    s.name = r.has("name") ? r.string("name") : "custom";
    s.dim_state = r.integer("dim_state");
    s.dim_noise = r.integer("dim_noise");
    if (s.dim_state == 0 || s.dim_noise == 0) r.fail("dim_state and dim_noise must be positive");
    s.features.clear();
    const json& feats = r.at("features");
    if (!feats.is_array() || feats.empty()) throw ConfigError(r.join("features") + ": expected a non-empty array");
    for (std::size_t i = 0; i < feats.size(); ++i)
        s.features.push_back(parse_feature(feats[i], r.join("features") + "[" + std::to_string(i) + "]"));
    const std::size_t in = s.feature_dim();
    s.drift = parse_map(r.child("drift"), s.dim_state, in);
    s.diffusion = parse_map(r.child("diffusion"), s.dim_state * s.dim_noise, in);
    s.growth_const = r.number("growth_const");
    if (r.has("lipschitz")) {
        const json& tab = r.at("lipschitz");
        if (!tab.is_array()) throw ConfigError(r.join("lipschitz") + ": expected an array");
        for (std::size_t i = 0; i < tab.size(); ++i) {
            Reader e(tab[i], r.join("lipschitz") + "[" + std::to_string(i) + "]");
            e.allow_only({"radius", "constant"});
            s.lipschitz_table.push_back({e.number("radius"), e.number("constant")});
        }
    }
    if (r.has("epsilon_family")) {
        const Reader f = r.child("epsilon_family");
        f.allow_only({"drift", "diffusion"});
        EpsilonFamily fam{f.has("drift") ? parse_map(f.child("drift"), s.dim_state, in)
                                         : MapDescriptor::zero(s.dim_state, in),
                          f.has("diffusion") ? parse_map(f.child("diffusion"), s.dim_state * s.dim_noise, in)
                                             : MapDescriptor::zero(s.dim_state * s.dim_noise, in)};
        s.epsilon_family = std::move(fam);
    }
    return s;
}

inline EventSpec parse_event(const Reader& r) {
    const std::string kind = r.string("kind");
    if (kind == "terminal_point") {
        r.allow_only({"kind", "a", "tol"});
        return EventSpec::terminal_point(r.vector("a"), r.number_or("tol", 1e-3));
    }
    if (kind == "terminal_half_space") {
        r.allow_only({"kind", "w", "c"});
        return EventSpec::terminal_half_space(r.vector("w"), r.number("c"));
    }
    if (kind == "terminal_ball") {
        r.allow_only({"kind", "center", "radius"});
        return EventSpec::terminal_ball(r.vector("center"), r.number("radius"));
    }
    if (kind == "sup_norm_exceed") {
        r.allow_only({"kind", "level"});
        return EventSpec::sup_norm_exceed(r.number("level"));
    }
    throw ConfigError(r.join("kind") + ": unknown event kind '" + kind + "'");
}

inline OptimizerConfig parse_optimizer(const Reader& r) {
    r.allow_only({"max_outer", "max_iters", "penalty_initial", "penalty_growth", "penalty_max", "grad_tol",
                  "feas_tol", "gradient", "fd_step", "lbfgs_memory", "max_energy"});
    OptimizerConfig o;
    o.max_outer = r.integer_or("max_outer", o.max_outer);
    o.max_inner_iters = r.integer_or("max_iters", o.max_inner_iters);
    o.penalty_initial = r.number_or("penalty_initial", o.penalty_initial);
    o.penalty_growth = r.number_or("penalty_growth", o.penalty_growth);
    o.penalty_max = r.number_or("penalty_max", o.penalty_max);
    o.grad_tol = r.number_or("grad_tol", o.grad_tol);
    o.feas_tol = r.number_or("feas_tol", o.feas_tol);
    o.fd_step = r.number_or("fd_step", o.fd_step);
    o.lbfgs_memory = r.integer_or("lbfgs_memory", o.lbfgs_memory);
    if (r.has("max_energy")) o.max_energy = r.number("max_energy");
    if (r.has("gradient")) {
        const auto g = r.string("gradient");
        if (g == "adjoint") o.gradient = GradientMethod::Adjoint;
        else if (g == "finite_difference") o.gradient = GradientMethod::FiniteDifference;
        else throw ConfigError(r.join("gradient") + ": expected 'adjoint' or 'finite_difference'");
    }
    if (o.penalty_initial <= 0.0 || o.penalty_growth < 1.0 || o.max_outer == 0 || o.lbfgs_memory == 0)
        r.fail("penalty_initial > 0, penalty_growth >= 1, max_outer >= 1 and lbfgs_memory >= 1 required");
    return o;
}

inline json optimizer_to_json(const OptimizerConfig& o) {
    json j{{"max_outer", o.max_outer},           {"max_iters", o.max_inner_iters},
           {"penalty_initial", o.penalty_initial}, {"penalty_growth", o.penalty_growth},
           {"penalty_max", o.penalty_max},       {"grad_tol", o.grad_tol},
           {"feas_tol", o.feas_tol},             {"fd_step", o.fd_step},
           {"lbfgs_memory", o.lbfgs_memory},
           {"gradient", o.gradient == GradientMethod::Adjoint ? "adjoint" : "finite_difference"}};
    if (o.max_energy) j["max_energy"] = *o.max_energy;
    return j;
}

inline McConfig parse_mc(const Reader& r) {
    r.allow_only({"n_samples", "seed", "method", "min_hits"});
    McConfig mc;
    mc.n_samples = r.integer_or("n_samples", mc.n_samples);
    mc.seed = r.integer_or("seed", mc.seed);
    mc.min_hits = r.integer_or("min_hits", mc.min_hits);
    if (mc.n_samples == 0) throw ConfigError(r.join("n_samples") + ": must be positive");
    if (r.has("method")) {
        const auto m = r.string("method");
        if (m == "plain") mc.method = McMethod::Plain;
        else if (m == "importance") mc.method = McMethod::Importance;
        else if (m == "both") mc.method = McMethod::Both;
        else if (m == "auto") mc.method = McMethod::Auto;
        else throw ConfigError(r.join("method") + ": expected plain, importance, both or auto");
    }
    return mc;
}

inline const char* mc_method_name(McMethod m) {
    switch (m) {
    case McMethod::Plain: return "plain";
    case McMethod::Importance: return "importance";
    case McMethod::Both: return "both";
    case McMethod::Auto: return "auto";
    }
    return "?";
}

/// Line and column (1-based) of a byte offset.
inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

} // namespace config_detail

/// Parses and validates an experiment configuration. Unknown keys are rejected;
/// errors name the offending field (and line for syntax errors).
inline ExperimentConfig parse_config_text(const std::string& text) {
    using config_detail::Reader;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = config_detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    const Reader r(root, "");
    r.allow_only({"mode", "spec", "x0", "grid", "schedule", "event", "optimizer", "mc", "target",
                  "functional", "output_dir"});

    ExperimentConfig cfg;
    try {
        if (r.has("mode")) cfg.mode = parse_mode(r.string("mode"));

        cfg.spec = config_detail::parse_spec(r.child("spec"));
        cfg.spec.validate();

        cfg.x0 = r.vector("x0");
        if (cfg.x0.size() != cfg.spec.dim_state)
            throw ConfigError("x0: expected " + std::to_string(cfg.spec.dim_state) + " entries");

        {
            const Reader g = r.child("grid");
            g.allow_only({"horizon", "n_steps"});
            const double horizon = g.number("horizon");
            const auto steps = g.integer("n_steps");
            if (!(horizon > 0.0)) throw ConfigError("grid.horizon: must be positive");
            if (steps == 0) throw ConfigError("grid.n_steps: must be positive");
            cfg.grid = TimeGrid(horizon, steps);
        }

        if (r.has("schedule")) {
            const json& sch = r.at("schedule");
            if (!sch.is_array()) throw ConfigError("schedule: expected an array");
            for (std::size_t i = 0; i < sch.size(); ++i) {
                const Reader e(sch[i], "schedule[" + std::to_string(i) + "]");
                e.allow_only({"epsilon", "theta"});
                const double eps = e.number("epsilon");
                const double theta = e.has("theta") ? e.number("theta") : std::sqrt(eps);
                cfg.schedule.push_back({eps, theta});
            }
        }

        if (r.has("event")) {
            cfg.event = config_detail::parse_event(r.child("event"));
            cfg.event->validate(cfg.spec.dim_state);
        }
        if (r.has("optimizer")) cfg.optimizer = config_detail::parse_optimizer(r.child("optimizer"));
        if (r.has("mc")) cfg.mc = config_detail::parse_mc(r.child("mc"));

        if (r.has("target")) {
            const Reader t = r.child("target");
            t.allow_only({"end", "values"});
            TargetConfig tc;
            if (t.has("end")) tc.end = t.vector("end");
            else if (t.has("values")) tc.values = t.matrix("values");
            else t.fail("expected 'end' or 'values'");
            cfg.target = std::move(tc);
        }

        if (r.has("functional")) {
            const Reader f = r.child("functional");
            f.allow_only({"out_dim", "map", "jacobian"});
            const auto q = f.integer("out_dim");
            if (q == 0) throw ConfigError("functional.out_dim: must be positive");
            FunctionalSpec fs{config_detail::parse_map(f.child("map"), q, cfg.spec.dim_state),
                              config_detail::expect_shape(f.matrix("jacobian"), q, cfg.spec.dim_state,
                                                          "functional.jacobian")};
            fs.validate();
            cfg.functional = std::move(fs);
        }

        if (r.has("output_dir")) cfg.output_dir = r.string("output_dir");
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }

    cfg.resolved = root;
    cfg.resolved.erase("output_dir");
    cfg.resolved["optimizer"] = config_detail::optimizer_to_json(cfg.optimizer);
    cfg.resolved["mc"] = json{{"n_samples", cfg.mc.n_samples},
                              {"seed", cfg.mc.seed},
                              {"method", config_detail::mc_method_name(cfg.mc.method)},
                              {"min_hits", cfg.mc.min_hits}};
    return cfg;
}

/// Replaces the MC seed, keeping the resolved config in sync.
inline void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.mc.seed = seed;
    cfg.resolved["mc"]["seed"] = seed;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

} // namespace pdldp
