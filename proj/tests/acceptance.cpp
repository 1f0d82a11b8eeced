// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pdldp/pdldp.hpp"

using namespace pdldp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double normal_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

const std::vector<double> kZero{0.0};

Outcome schilder_rate_recovery() {
    const TimeGrid grid(1.0, 1000);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({1.0}, 1e-4), grid);
    const double secs = seconds_since(t0);
    Path line(grid, 1);
    for (std::size_t k = 0; k < grid.n_points(); ++k) line.values(k, 0) = grid.time(k);
    const double dist = sup_distance(r.minimizer_path, line);
    const double v = r.value.value();
    return {r.value.is_finite() && std::abs(v - 0.5) <= 1e-3 && dist <= 1e-2 && secs < 10.0,
            fmt("value=%.9f (|err|<=1e-3) sup_dist=%.2e (<=1e-2) time=%.3fs (<10s)", v, dist, secs)};
}

Outcome ldp_slope_check() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> thetas{0.5, 0.35, 0.25, 0.15};
    std::vector<double> oracle;
    for (double t : thetas) oracle.push_back(normal_tail(1.0 / t));
    const auto oracle_fit = ldp_slope(thetas, oracle, -0.5);

    const TimeGrid grid(1.0, 100);
    const auto ev = EventSpec::terminal_half_space({1.0}, 1.0);
    const auto rate = min_rate_event(builtin::schilder(), kZero, ev, grid);
    std::vector<double> mc;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const std::uint64_t seed = 4000 + i;
        const auto e = thetas[i] > 0.2
                           ? estimate_event_prob(builtin::schilder(), kZero, thetas[i], ev, grid, 200000, seed)
                           : importance_estimate(builtin::schilder(), kZero, thetas[i], ev, grid,
                                                 rate.minimizer_control, 200000, seed);
        mc.push_back(e.p_hat);
    }
    const auto mc_fit = ldp_slope(thetas, mc, -rate.value.value());
    const double secs = seconds_since(t0);
    const double oracle_rel = std::abs(oracle_fit.fitted_limit + 0.5) / 0.5;
    return {oracle_rel <= 0.10 && mc_fit.rel_gap <= 0.15 && secs < 300.0,
            fmt("oracle limit=%.4f (rel %.3f<=0.10) mc limit=%.4f rel_gap=%.3f (<=0.15) time=%.1fs (<300s)",
                oracle_fit.fitted_limit, oracle_rel, mc_fit.fitted_limit, mc_fit.rel_gap, secs)};
}

Outcome importance_variance() {
    const TimeGrid grid(1.0, 100);
    const auto ev = EventSpec::terminal_half_space({1.0}, 1.0);
    const auto rate = min_rate_event(builtin::schilder(), kZero, ev, grid);
    const auto is = importance_estimate(builtin::schilder(), kZero, 0.2, ev, grid, rate.minimizer_control, 100000, 31);
    const auto plain = estimate_event_prob(builtin::schilder(), kZero, 0.2, ev, grid, 100000, 31);
    if (plain.n_hits > 0) {
        const double ratio = plain.std_err / is.std_err;
        return {ratio >= 10.0, fmt("plain se=%.3e is se=%.3e ratio=%.1f (>=10)", plain.std_err, is.std_err, ratio)};
    }
    // No plain hits: compare the one-sided 95%% bound with the IS 95%% half-width.
    const double half_width = 1.96 * is.std_err;
    const double ratio = plain.upper_bound / half_width;
    return {ratio >= 10.0, fmt("plain hits=0 CP bound=%.3e vs IS p=%.3e half-width=%.3e ratio=%.1f (>=10)",
                               plain.upper_bound, is.p_hat, half_width, ratio)};
}

Outcome skeleton_consistency() {
    const TimeGrid grid(1.0, 200);
    StreamRng rng(11, 4);
    std::size_t checked = 0, mismatches = 0;
    for (const auto& spec : builtin::all()) {
        for (int i = 0; i < 20; ++i) {
            std::vector<double> x0(spec.dim_state);
            for (auto& v : x0) v = rng.uniform(-2.0, 2.0);
            Control nu(grid, spec.dim_noise);
            for (auto& v : nu.values.data()) v = rng.uniform(-3.0, 3.0);
            const auto noise = brownian_draw(grid, spec.dim_noise, 5, static_cast<std::uint64_t>(i));
            const Path a = simulate_controlled(spec, x0, 0.0, nu, grid, noise);
            const Path b = solve_skeleton(spec, x0, nu, grid);
            ++checked;
            if (!(a.values == b.values)) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%zu instances, %zu not bit-identical", checked, mismatches)};
}

Outcome growth_certificate() {
    const TimeGrid grid(1.0, 200);
    StreamRng rng(12, 4);
    std::size_t checked = 0, violations = 0;
    double worst = 0.0;
    for (const auto& spec : builtin::all()) {
        for (int i = 0; i < 100; ++i) {
            std::vector<double> x0(spec.dim_state);
            for (auto& v : x0) v = rng.uniform(-3.0, 3.0);
            Control nu(grid, spec.dim_noise);
            const double amp = rng.uniform(0.0, 4.0);
            for (auto& v : nu.values.data()) v = rng.uniform(-amp, amp);
            const double lhs = sup_norm_sq(solve_skeleton(spec, x0, nu, grid));
            const double rhs = growth_bound_value(x0, spec.growth_const, grid.horizon(), nu.norm_sq());
            worst = std::max(worst, lhs / rhs);
            ++checked;
            if (!(lhs <= rhs)) ++violations;
        }
    }
    return {violations == 0, fmt("%zu instances, %zu violations, max lhs/rhs=%.3e", checked, violations, worst)};
}

Outcome non_anticipativity() {
    const TimeGrid grid(1.0, 100);
    StreamRng rng(13, 4);
    std::size_t checked = 0, changed = 0;
    for (const auto& spec : builtin::all()) {
        for (int trial = 0; trial < 100; ++trial) {
            Path p = detail::random_bounded_path(grid, spec.dim_state, 5.0, rng);
            const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(grid.n_points()));
            const auto b = eval_coeff(spec, CoeffKind::Drift, k, p);
            const auto s = eval_coeff(spec, CoeffKind::Diffusion, k, p);
            for (std::size_t j = k + 1; j < grid.n_points(); ++j)
                for (std::size_t i = 0; i < spec.dim_state; ++i) p.values(j, i) += rng.uniform(-50.0, 50.0);
            ++checked;
            if (b != eval_coeff(spec, CoeffKind::Drift, k, p) || s != eval_coeff(spec, CoeffKind::Diffusion, k, p))
                ++changed;
        }
    }
    return {changed == 0, fmt("%zu trials, %zu changed", checked, changed)};
}

Outcome girsanov_mean_one() {
    const TimeGrid grid(1.0, 100);
    std::vector<std::pair<const char*, std::function<double(double)>>> tilts{
        {"constant 0.5", [](double) { return 0.5; }},
        {"sin(2 pi t)", [](double t) { return std::sin(2.0 * std::numbers::pi * t); }},
        {"step -0.8/+0.4", [](double t) { return t < 0.5 ? -0.8 : 0.4; }}};
    bool ok = true;
    std::string detail;
    for (std::size_t j = 0; j < tilts.size(); ++j) {
        Control nu(grid, 1);
        for (std::size_t k = 0; k < grid.n_steps(); ++k) nu.values(k, 0) = tilts[j].second(grid.time(k));
        const std::size_t n = 100000;
        std::vector<double> w(n), w2(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = std::exp(girsanov_log_weight(nu, 1.0, brownian_draw(grid, 1, 600 + j, i)));
            w2[i] = w[i] * w[i];
        }
        const double mean = detail::ordered_sum(w) / n;
        const double se = std::sqrt((detail::ordered_sum(w2) / n - mean * mean) / n);
        const double z = std::abs(mean - 1.0) / se;
        ok = ok && z <= 3.0;
        detail += fmt("%s%s: mean=%.5f z=%.2f", j ? "; " : "", tilts[j].first, mean, z);
    }
    return {ok, detail + " (z<=3)"};
}

Outcome path_dependent_rate_oracle() {
    const TimeGrid grid(1.0, 10000);
    Path g(grid, 1);
    for (std::size_t k = 0; k < grid.n_points(); ++k) g.values(k, 0) = grid.time(k);
    const Rate r = rate_of_path(builtin::ornstein_uhlenbeck(), kZero, g);
    const double err = std::abs(r.value() - 7.0 / 6.0);
    return {r.is_finite() && err <= 1e-3, fmt("I(g)=%.9f exact 7/6 |err|=%.2e (<=1e-3)", r.value(), err)};
}

Outcome small_time_drift_independence() {
    const TimeGrid grid(1.0, 1000);
    Path g(grid, 1);
    for (std::size_t k = 0; k < grid.n_points(); ++k) g.values(k, 0) = grid.time(k) + 0.3 * std::sin(5.0 * grid.time(k));
    auto tanh_spec = builtin::delay_tanh();
    auto tanh_other = tanh_spec;
    tanh_other.drift = MapDescriptor::affine(1, 3, {2.0, -1.0, 0.5}, {-4.0});
    const bool bit_equal = small_time_rate(builtin::schilder(), kZero, g) == small_time_rate(builtin::ornstein_uhlenbeck(), kZero, g) &&
                           small_time_rate(builtin::running_max_feedback(), kZero, g) == small_time_rate(builtin::schilder(), kZero, g) &&
                           small_time_rate(tanh_spec, kZero, g) == small_time_rate(tanh_other, kZero, g);
    double id_err = 0.0;
    for (const auto& spec : {builtin::schilder(), builtin::delay_tanh()}) {
        const Rate j = small_time_rate(spec, kZero, g);
        const Rate jf = delta_method_rate(FunctionalSpec::linear(1, 1, {1.0}), spec, kZero, g);
        id_err = std::max(id_err, std::abs(j.value() - jf.value()));
    }
    Path line(grid, 1);
    for (std::size_t k = 0; k < grid.n_points(); ++k) line.values(k, 0) = grid.time(k);
    const double dbl = delta_method_rate(FunctionalSpec::linear(1, 1, {2.0}), builtin::schilder(), kZero, line).value();
    const double dbl_err = std::abs(dbl - 0.125);
    return {bit_equal && id_err <= 1e-6 && dbl_err <= 1e-6,
            fmt("drift variants bit-identical=%s identity |J^f-J|=%.2e (<=1e-6) f=2x J^f=%.12f |err|=%.2e (<=1e-6)",
                bit_equal ? "yes" : "no", id_err, dbl, dbl_err)};
}

Outcome rescaling_moment_check() {
    const double eps = 0.01;
    const TimeGrid grid(1.0, 100);
    const auto rp = rescale_problem(builtin::ornstein_uhlenbeck(), std::vector<double>{1.0}, eps, grid);
    const std::size_t n = 100000;
    std::vector<double> u(n), u2(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = simulate(rp.spec, rp.x0, rp.theta, grid, brownian_draw(grid, 1, 777, i)).terminal()[0];
        u2[i] = u[i] * u[i];
    }
    const double mean = detail::ordered_sum(u) / n;
    const double var = (detail::ordered_sum(u2) - n * mean * mean) / (n - 1);
    const double exact = (1.0 - std::exp(-2.0 * eps)) / 2.0;
    const double rel = std::abs(var / exact - 1.0);
    return {rel <= 0.05, fmt("var U(1)=%.6e exact=%.6e rel err=%.4f (<=0.05)", var, exact, rel)};
}

Outcome determinism() {
    auto cfg = load_config(std::string(PDLDP_CONFIG_DIR) + "/schilder_verify.json");
    const fs::path root = fs::temp_directory_path() / "pdldp_acceptance_determinism";
    fs::remove_all(root);
    cfg.output_dir = (root / "a").string();
    const auto a = run_experiment(cfg);
    cfg.output_dir = (root / "b").string();
    const auto b = run_experiment(cfg);
    std::size_t differing = 0;
    if (a.files.size() != b.files.size()) return {false, "different file sets"};
    for (std::size_t i = 0; i < a.files.size(); ++i)
        if (slurp(a.files[i]) != slurp(b.files[i])) ++differing;
    return {differing == 0 && !a.files.empty(),
            fmt("%zu CSV files compared, %zu differ", a.files.size(), differing)};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"schilder rate recovery", schilder_rate_recovery},
        {"LDP slope check", ldp_slope_check},
        {"importance-sampling variance", importance_variance},
        {"skeleton/controlled-SDE consistency", skeleton_consistency},
        {"growth certificate", growth_certificate},
        {"non-anticipativity", non_anticipativity},
        {"Girsanov mean-one", girsanov_mean_one},
        {"path-dependent rate oracle", path_dependent_rate_oracle},
        {"small-time drift independence", small_time_drift_independence},
        {"rescaling moment check", rescaling_moment_check},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s criterion %zu: %s | %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
