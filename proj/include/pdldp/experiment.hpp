#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pdldp/config.hpp"
#include "pdldp/mc_verify.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/sde_sim.hpp"
#include "pdldp/skeleton.hpp"
#include "pdldp/small_time.hpp"

namespace pdldp {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunReport {
    Mode mode = Mode::Simulate;
    std::vector<std::filesystem::path> files; ///< CSV outputs, in write order
    std::vector<std::string> summary_lines;   ///< human-readable one-liners
};

namespace experiment_detail {

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& dir, const std::string& name, const json& config,
              RunReport& report)
        : path_(dir / name), out_(path_) {
        if (!out_) throw Error("cannot write '" + path_.string() + "'");
        out_ << "# config: " << config.dump() << "\n";
        report.files.push_back(path_);
    }

    void line(const std::string& s) { out_ << s << "\n"; }

    void key_value(const std::string& key, const std::string& value) { line(key + "," + value); }
    void key_value(const std::string& key, double value) { key_value(key, format_double(value)); }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::string path_header(const char* prefix, std::size_t dim) {
    std::string h = "t";
    for (std::size_t i = 1; i <= dim; ++i) h += std::string(",") + prefix + "_" + std::to_string(i);
    return h;
}

inline void write_path(CsvWriter& w, const Path& p) {
    w.line(path_header("x", p.dim()));
    for (std::size_t k = 0; k < p.values.rows(); ++k) {
        std::string row = format_double(p.grid.time(k));
        for (double v : p.values.row(k)) row += "," + format_double(v);
        w.line(row);
    }
}

inline void write_control(CsvWriter& w, const Control& c) {
    w.line(path_header("nu", c.dim()));
    for (std::size_t k = 0; k < c.values.rows(); ++k) {
        std::string row = format_double(c.grid.time(k));
        for (double v : c.values.row(k)) row += "," + format_double(v);
        w.line(row);
    }
}

inline void write_rate_summary(CsvWriter& w, const RateResult& r) {
    w.line("key,value");
    w.key_value("value", r.value.value());
    w.key_value("infinite", r.value.is_infinite() ? "true" : "false");
    w.key_value("iterations", std::to_string(r.iterations));
    w.key_value("final_gradient_norm", r.final_gradient_norm);
    w.key_value("feasibility_residual", r.feasibility_residual);
    w.key_value("converged", r.converged ? "true" : "false");
}

inline std::string describe(const Rate& r) {
    return r.is_infinite() ? std::string("inf") : format_double(r.value());
}

inline const EventSpec& require_event(const ExperimentConfig& cfg, Mode mode) {
    if (!cfg.event) throw ConfigError(std::string("event: required for mode ") + mode_name(mode));
    return *cfg.event;
}

/// Runs the MC schedule, writes estimates and slope tables, returns the fit.
inline SlopeFit run_schedule(const ExperimentConfig& cfg, const std::vector<NoiseLevel>& levels,
                             const std::vector<CoefficientSpec>& level_specs, const EventSpec& event,
                             const RateResult& theory, const std::filesystem::path& dir,
                             RunReport& report) {
    std::vector<ProbEstimate> all;
    std::vector<double> fit_thetas, fit_ps;
    std::vector<const char*> fit_methods;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        // Level specs are already at their epsilon; pass epsilon = 0 so no
        // further family shift is applied.
        const NoiseLevel level = levels[i];
        const NoiseLevel sim_level{0.0, level.theta};
        const std::uint64_t seed = cfg.mc.seed + i;
        std::vector<ProbEstimate> here;
        const bool want_plain = cfg.mc.method != McMethod::Importance;
        bool want_is = cfg.mc.method == McMethod::Importance || cfg.mc.method == McMethod::Both;
        if (want_plain) {
            auto e = estimate_event_prob(level_specs[i], cfg.x0, sim_level, event, cfg.grid,
                                         cfg.mc.n_samples, seed);
            e.epsilon = level.epsilon;
            here.push_back(e);
            if (cfg.mc.method == McMethod::Auto && e.n_hits < cfg.mc.min_hits) want_is = true;
        }
        if (want_is) {
            auto e = importance_estimate(level_specs[i], cfg.x0, sim_level, event, cfg.grid,
                                         theory.minimizer_control, cfg.mc.n_samples, seed);
            e.epsilon = level.epsilon;
            here.push_back(e);
        }
        // Fit on the estimate with the smallest relative standard error.
        const ProbEstimate* best = nullptr;
        for (const auto& e : here) {
            if (!(e.p_hat > 0.0)) continue;
            if (!best || e.std_err / e.p_hat < best->std_err / best->p_hat) best = &e;
        }
        if (best) {
            fit_thetas.push_back(level.theta);
            fit_ps.push_back(best->p_hat);
            fit_methods.push_back(method_name(best->method));
        }
        all.insert(all.end(), here.begin(), here.end());
    }

    {
        CsvWriter w(dir, "estimates.csv", cfg.resolved, report);
        w.line(kEstimateCsvHeader);
        for (const auto& e : all) w.line(estimate_csv_row(e));
    }
    const SlopeFit fit = ldp_slope(fit_thetas, fit_ps, -theory.value.value());
    {
        CsvWriter w(dir, "slope_fit.csv", cfg.resolved, report);
        w.line("theta,theta_sq,log_p,theta_sq_log_p,method");
        for (std::size_t i = 0; i < fit.points.size(); ++i)
            w.line(format_double(fit.thetas[i]) + "," + format_double(fit.points[i].theta_sq) + "," +
                   format_double(fit.points[i].log_p) + "," + format_double(fit.per_point_values[i]) +
                   "," + fit_methods[i]);
    }
    {
        CsvWriter w(dir, "slope_summary.csv", cfg.resolved, report);
        w.line("key,value");
        w.key_value("fitted_limit", fit.fitted_limit);
        w.key_value("fitted_slope", fit.fitted_slope);
        w.key_value("fitted_curvature", fit.fitted_curvature);
        w.key_value("theory_value", fit.theory_value);
        w.key_value("rel_gap", fit.rel_gap);
    }
    report.summary_lines.push_back("fitted limit " + format_double(fit.fitted_limit) + " vs theory " +
                                   format_double(fit.theory_value) + " (rel_gap " +
                                   format_double(fit.rel_gap) + ")");
    return fit;
}

inline void write_metadata(const std::filesystem::path& dir, Mode mode) {
    std::ofstream meta(dir / "run_metadata.txt");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    meta << "tool: pdldp " << kToolVersion << "\n";
    meta << "mode: " << mode_name(mode) << "\n";
    meta << "finished_utc: " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << "\n";
}

} // namespace experiment_detail

/// Dispatches on the mode and writes the CSV reports into cfg.output_dir.
/// Every CSV starts with a "# config:" line holding the resolved configuration;
/// the wall-clock timestamp goes only to run_metadata.txt.
inline RunReport run_experiment(const ExperimentConfig& cfg, Mode mode) {
    using namespace experiment_detail;
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    RunReport report;
    report.mode = mode;
    json resolved = cfg.resolved;
    resolved["mode"] = mode_name(mode);
    ExperimentConfig run_cfg = cfg;
    run_cfg.resolved = resolved;

    switch (mode) {
    case Mode::Simulate: {
        if (cfg.schedule.empty()) throw ConfigError("schedule: simulate mode needs at least one (epsilon, theta)");
        const NoiseLevel level = cfg.schedule.front();
        const CoefficientSpec eff = cfg.spec.at_epsilon(level.epsilon);
        for (std::size_t i = 0; i < cfg.mc.n_samples; ++i) {
            const NoiseDraw noise = brownian_draw(cfg.grid, eff.dim_noise, cfg.mc.seed, i);
            const Path p = simulate(eff, cfg.x0, level.theta, cfg.grid, noise);
            std::ostringstream name;
            name << "sample_" << std::setw(5) << std::setfill('0') << i << ".csv";
            CsvWriter w(dir, name.str(), resolved, report);
            write_path(w, p);
        }
        report.summary_lines.push_back("wrote " + std::to_string(cfg.mc.n_samples) + " sample paths");
        break;
    }
    case Mode::Skeleton: {
        const Path phi = solve_uncontrolled(cfg.spec.at_epsilon(0.0), cfg.x0, cfg.grid);
        CsvWriter w(dir, "skeleton.csv", resolved, report);
        write_path(w, phi);
        std::string end;
        for (double v : phi.terminal()) end += (end.empty() ? "" : " ") + format_double(v);
        report.summary_lines.push_back("skeleton endpoint " + end);
        break;
    }
    case Mode::Rate: {
        const EventSpec& event = require_event(cfg, mode);
        const CoefficientSpec limit = cfg.spec.at_epsilon(0.0);
        const RateResult r = min_rate_event(limit, cfg.x0, event, cfg.grid, cfg.optimizer);
        {
            CsvWriter w(dir, "rate_summary.csv", resolved, report);
            write_rate_summary(w, r);
            if (cfg.target)
                w.key_value("target_rate", rate_of_path(limit, cfg.x0, cfg.target->build(cfg.grid, cfg.x0)).value());
        }
        {
            CsvWriter w(dir, "minimizer_path.csv", resolved, report);
            write_path(w, r.minimizer_path);
        }
        {
            CsvWriter w(dir, "minimizer_control.csv", resolved, report);
            write_control(w, r.minimizer_control);
        }
        report.summary_lines.push_back("min rate " + describe(r.value) +
                                       (r.diagnostic.empty() ? "" : " (" + r.diagnostic + ")"));
        break;
    }
    case Mode::Verify: {
        const EventSpec& event = require_event(cfg, mode);
        if (cfg.schedule.size() < 2) throw ConfigError("schedule: verify mode needs at least two levels");
        SmallNoiseSchedule schedule(cfg.schedule); // validates monotone theta
        const CoefficientSpec limit = cfg.spec.at_epsilon(0.0);
        const RateResult theory = min_rate_event(limit, cfg.x0, event, cfg.grid, cfg.optimizer);
        if (theory.value.is_infinite())
            throw Error("event is unreachable by the skeleton: " + theory.diagnostic);
        {
            CsvWriter w(dir, "rate_summary.csv", resolved, report);
            write_rate_summary(w, theory);
        }
        {
            CsvWriter w(dir, "minimizer_path.csv", resolved, report);
            write_path(w, theory.minimizer_path);
        }
        std::vector<CoefficientSpec> level_specs;
        for (const auto& l : cfg.schedule) level_specs.push_back(cfg.spec.at_epsilon(l.epsilon));
        run_schedule(run_cfg, cfg.schedule, level_specs, event, theory, dir, report);
        report.summary_lines.insert(report.summary_lines.begin(), "min rate " + describe(theory.value));
        break;
    }
    case Mode::SmallTime: {
        const CoefficientSpec limit = cfg.spec.at_epsilon(0.0);
        CsvWriter summary(dir, "small_time_summary.csv", resolved, report);
        summary.line("key,value");
        if (cfg.target) {
            const Rate j = small_time_rate(limit, cfg.x0, cfg.target->build(cfg.grid, cfg.x0));
            summary.key_value("target_rate", j.value());
            report.summary_lines.push_back("small-time rate of target " + describe(j));
        }
        if (cfg.event) {
            if (cfg.schedule.size() < 2) throw ConfigError("schedule: smalltime mode needs at least two levels");
            const CoefficientSpec drift_free = limit.without_drift();
            const RateResult theory = min_rate_event(drift_free, cfg.x0, *cfg.event, cfg.grid, cfg.optimizer);
            if (theory.value.is_infinite())
                throw Error("event is unreachable by the drift-free skeleton: " + theory.diagnostic);
            summary.key_value("event_rate", theory.value.value());
            std::vector<NoiseLevel> levels;
            std::vector<CoefficientSpec> level_specs;
            for (const auto& l : cfg.schedule) {
                const auto rp = rescale_problem(limit, cfg.x0, l.epsilon, cfg.grid);
                levels.push_back({l.epsilon, rp.theta});
                level_specs.push_back(rp.spec);
            }
            SmallNoiseSchedule check(levels);
            const SlopeFit fit =
                run_schedule(run_cfg, levels, level_specs, *cfg.event, theory, dir, report);
            summary.key_value("fitted_limit", fit.fitted_limit);
            summary.key_value("rel_gap", fit.rel_gap);
            {
                CsvWriter w(dir, "minimizer_path.csv", resolved, report);
                write_path(w, theory.minimizer_path);
            }
        }
        if (!cfg.target && !cfg.event) throw ConfigError("smalltime mode needs 'target' and/or 'event'");
        break;
    }
    case Mode::Delta: {
        if (!cfg.functional) throw ConfigError("functional: required for mode delta");
        if (!cfg.target) throw ConfigError("target: required for mode delta");
        const std::vector<double> zero(cfg.functional->out_dim(), 0.0);
        const Path g = cfg.target->build(cfg.grid, zero);
        const CoefficientSpec limit = cfg.spec.at_epsilon(0.0);
        const DeltaLift lift = delta_method_lift(*cfg.functional, limit, cfg.x0, g);
        {
            CsvWriter w(dir, "delta_summary.csv", resolved, report);
            w.line("key,value");
            w.key_value("value", lift.value.value());
            w.key_value("infinite", lift.value.is_infinite() ? "true" : "false");
            w.key_value("jacobian_check", cfg.functional->jacobian_matches(cfg.x0) ? "pass" : "fail");
        }
        if (lift.lifted_path) {
            CsvWriter w(dir, "lifted_path.csv", resolved, report);
            write_path(w, *lift.lifted_path);
        }
        report.summary_lines.push_back("delta-method rate " + describe(lift.value));
        break;
    }
    }
    write_metadata(dir, mode);
    return report;
}

inline RunReport run_experiment(const ExperimentConfig& cfg) {
    if (!cfg.mode) throw ConfigError("mode: not given in the config or on the command line");
    return run_experiment(cfg, *cfg.mode);
}

} // namespace pdldp
