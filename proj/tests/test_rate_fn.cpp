#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pdldp/builtin_specs.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/skeleton.hpp"

using namespace pdldp;

namespace {

const std::vector<double> kZero{0.0};

Path path_from(const TimeGrid& g, std::size_t d, auto&& fn) {
    Path p(g, d);
    for (std::size_t k = 0; k < g.n_points(); ++k)
        for (std::size_t i = 0; i < d; ++i) p.values(k, i) = fn(g.time(k), i);
    return p;
}

CoefficientSpec degenerate() {
    CoefficientSpec s;
    s.name = "degenerate";
    s.drift = MapDescriptor::zero(1, 1);
    s.diffusion = MapDescriptor::constant({0.0}, 1);
    s.validate();
    return s;
}

// Signed distance of the terminal point to the event boundary (<= 0 inside).
double event_gap(const EventSpec& e, const Path& p) {
    const auto end = p.terminal();
    switch (e.kind) {
    case EventKind::TerminalPoint: return EventSpec::distance(end, e.point) - e.scalar;
    case EventKind::TerminalHalfSpace: return e.scalar - EventSpec::inner(e.point, end);
    case EventKind::TerminalBall: return EventSpec::distance(end, e.point) - e.scalar;
    case EventKind::SupNormExceed: {
        double best = 0.0;
        for (std::size_t k = 0; k < p.values.rows(); ++k) best = std::max(best, euclidean_norm(p.values.row(k)));
        return e.scalar - best;
    }
    }
    return 0.0;
}

} // namespace

TEST(ControlEnergy, Examples) {
    const TimeGrid grid(1.0, 10000);
    EXPECT_EQ(control_energy(Control(grid, 1)), 0.0);
    EXPECT_NEAR(control_energy(Control(grid, RowMatrix(10000, 1, 3.0))), 4.5, 1e-10);
    Control ramp(grid, 1);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) ramp.values(k, 0) = grid.time(k);
    EXPECT_NEAR(control_energy(ramp), 1.0 / 6.0, 1e-3);
}

TEST(ControlForPath, LinearTargetUnderSchilder) {
    const TimeGrid grid(2.0, 100);
    const std::vector<double> x0{0.5};
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return 0.5 - 1.5 * t; });
    const auto inv = control_for_path(builtin::schilder(), x0, g);
    ASSERT_TRUE(inv.feasible);
    for (double v : inv.control.values.data()) EXPECT_NEAR(v, -1.5, 1e-12);
    EXPECT_NEAR(control_energy(inv.control), 1.5 * 1.5 * 2.0 / 2.0, 1e-10);
}

TEST(ControlForPath, UncontrolledFlowNeedsNoControl) {
    const TimeGrid grid(1.0, 1000);
    for (const auto& spec : builtin::all()) {
        const std::vector<double> x0(spec.dim_state, 0.8);
        const Path flow = solve_uncontrolled(spec, x0, grid);
        const auto inv = control_for_path(spec, x0, flow);
        ASSERT_TRUE(inv.feasible) << spec.name;
        EXPECT_LT(control_energy(inv.control), 1e-8) << spec.name;
    }
}

TEST(ControlForPath, DegenerateSystemIsInfeasible) {
    const TimeGrid grid(1.0, 100);
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return t; });
    const auto inv = control_for_path(degenerate(), kZero, g);
    EXPECT_FALSE(inv.feasible);
    EXPECT_EQ(inv.bad_interval, 0u);
    EXPECT_TRUE(rate_of_path(degenerate(), kZero, g).is_infinite());
}

TEST(ControlForPath, WrongStartIsInfeasible) {
    const TimeGrid grid(1.0, 10);
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return 1.0 + t; });
    const auto inv = control_for_path(builtin::schilder(), kZero, g);
    EXPECT_FALSE(inv.feasible);
    EXPECT_NE(inv.diagnostic.find("x0"), std::string::npos);
}

TEST(ControlForPath, NonFiniteTargetRejected) {
    const TimeGrid grid(1.0, 10);
    Path g(grid, 1);
    g.values(3, 0) = std::nan("");
    EXPECT_THROW(control_for_path(builtin::schilder(), kZero, g), NonFiniteError);
}

TEST(ControlForPath, OverdeterminedSystemUsesRangeOfSigma) {
    // d = 2, m = 1: only paths moving along sigma = (0, s) are reachable.
    const auto spec = builtin::integral_oscillator();
    const TimeGrid grid(1.0, 200);
    const std::vector<double> x0{0.0, 0.0};
    const Path g = path_from(grid, 2, [](double t, std::size_t i) { return i == 0 ? t : 0.0; });
    EXPECT_TRUE(rate_of_path(spec, x0, g).is_infinite());
    // Following the uncontrolled flow plus a control in the second component is reachable.
    Control nu(grid, 1);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) nu.values(k, 0) = std::sin(4.0 * grid.time(k));
    const Path phi = solve_skeleton(spec, x0, nu, grid);
    const auto inv = control_for_path(spec, x0, phi);
    ASSERT_TRUE(inv.feasible);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) EXPECT_NEAR(inv.control.values(k, 0), nu.values(k, 0), 1e-9);
}

TEST(RateOfPath, SchilderStraightLine) {
    const TimeGrid grid(1.0, 1000);
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return t; });
    EXPECT_NEAR(rate_of_path(builtin::schilder(), kZero, g).value(), 0.5, 1e-12);
    const TimeGrid long_grid(2.0, 1000);
    const Path g2 = path_from(long_grid, 1, [](double t, std::size_t) { return 3.0 * t / 2.0; });
    EXPECT_NEAR(rate_of_path(builtin::schilder(), kZero, g2).value(), 9.0 / 4.0, 1e-12);
}

TEST(RateOfPath, ConstantPathIsFree) {
    const TimeGrid grid(1.0, 50);
    const Path g = path_from(grid, 1, [](double, std::size_t) { return 0.0; });
    EXPECT_EQ(rate_of_path(builtin::schilder(), kZero, g).value(), 0.0);
}

TEST(RateOfPath, OuStraightLine) {
    const TimeGrid grid(1.0, 10000);
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return t; });
    EXPECT_NEAR(rate_of_path(builtin::ornstein_uhlenbeck(), kZero, g).value(), 7.0 / 6.0, 1e-3);
}

TEST(MinRateEvent, SchilderTerminalPoint) {
    const TimeGrid grid(1.0, 1000);
    const auto r = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({1.0}, 1e-4), grid);
    ASSERT_TRUE(r.value.is_finite()) << r.diagnostic;
    EXPECT_NEAR(r.value.value(), 0.5, 1e-3);
    const Path line = path_from(grid, 1, [](double t, std::size_t) { return t; });
    EXPECT_LT(sup_distance(r.minimizer_path, line), 1e-2);
}

TEST(MinRateEvent, SchilderSupNorm) {
    const TimeGrid grid(1.0, 500);
    const auto sup = min_rate_event(builtin::schilder(), kZero, EventSpec::sup_norm_exceed(1.0), grid);
    const auto term = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({1.0}, 0.0), grid);
    ASSERT_TRUE(sup.value.is_finite()) << sup.diagnostic;
    EXPECT_NEAR(sup.value.value(), 0.5, 5e-3);
    EXPECT_NEAR(sup.value.value(), term.value.value(), 5e-3);
}

TEST(MinRateEvent, BallAroundUncontrolledEndpointIsFree) {
    const TimeGrid grid(1.0, 200);
    for (const auto& spec : builtin::all()) {
        const std::vector<double> x0(spec.dim_state, 0.3);
        const Path flow = solve_uncontrolled(spec, x0, grid);
        const auto e = EventSpec::terminal_ball(std::vector<double>(flow.terminal().begin(), flow.terminal().end()), 1e-3);
        const auto r = min_rate_event(spec, x0, e, grid);
        ASSERT_TRUE(r.value.is_finite()) << spec.name;
        EXPECT_EQ(r.value.value(), 0.0) << spec.name;
    }
}

TEST(MinRateEvent, DegenerateEventIsInfinite) {
    const TimeGrid grid(1.0, 50);
    const auto r = min_rate_event(degenerate(), kZero, EventSpec::terminal_point({1.0}, 1e-3), grid);
    EXPECT_TRUE(r.value.is_infinite());
    EXPECT_FALSE(r.diagnostic.empty());
}

TEST(MinRateEvent, SchilderScalingLaw) {
    const TimeGrid grid(1.0, 400);
    const auto base = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({1.0}, 0.0), grid);
    for (double a : {0.5, 2.0}) {
        const auto r = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({a}, 0.0), grid);
        EXPECT_NEAR(r.value.value() / (a * a * base.value.value()), 1.0, 1e-2) << a;
    }
}

TEST(MinRateEvent, HalfSpaceMatchesClosedFormOnOu) {
    // OU from 0 to level c at T: minimal energy c^2 / (1 - e^{-2T}) (continuous time).
    const TimeGrid grid(1.0, 2000);
    const auto r = min_rate_event(builtin::ornstein_uhlenbeck(), kZero, EventSpec::terminal_half_space({1.0}, 1.0), grid);
    ASSERT_TRUE(r.value.is_finite());
    EXPECT_NEAR(r.value.value(), 1.0 / (1.0 - std::exp(-2.0)), 2e-3);
}

TEST(MinRateEvent, MinimizerIsSelfConsistent) {
    const TimeGrid grid(1.0, 100);
    OptimizerConfig opt;
    for (const auto& spec : builtin::all()) {
        const std::vector<double> x0(spec.dim_state, 0.0);
        std::vector<double> w(spec.dim_state, 0.0);
        w[0] = 1.0;
        for (const auto& e : {EventSpec::terminal_half_space(w, 1.5), EventSpec::sup_norm_exceed(1.2)}) {
            const auto r = min_rate_event(spec, x0, e, grid, opt);
            ASSERT_TRUE(r.value.is_finite()) << spec.name << " " << event_name(e.kind) << ": " << r.diagnostic;
            EXPECT_EQ(solve_skeleton(spec, x0, r.minimizer_control, grid).values, r.minimizer_path.values);
            EXPECT_DOUBLE_EQ(r.value.value(), control_energy(r.minimizer_control));
            EXPECT_LE(event_gap(e, r.minimizer_path), 1e-6) << spec.name << " " << event_name(e.kind);
            EXPECT_LE(r.feasibility_residual, 1e-6);
        }
    }
}

TEST(MinRateEvent, LowerBoundOverFeasiblePaths) {
    // Every path in the event costs at least the minimum.
    const TimeGrid grid(1.0, 100);
    StreamRng rng(21, 0);
    for (const auto& spec : builtin::all()) {
        if (spec.dim_state != spec.dim_noise) continue; // random paths are unreachable otherwise
        const std::vector<double> x0(spec.dim_state, 0.0);
        const auto e = EventSpec::terminal_half_space(std::vector<double>(spec.dim_state, 1.0), 1.0);
        const auto r = min_rate_event(spec, x0, e, grid);
        ASSERT_TRUE(r.value.is_finite());
        for (int trial = 0; trial < 30; ++trial) {
            const double end = 1.0 + rng.uniform(0.0, 0.5);
            const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
            const Path g = path_from(grid, 1, [&](double t, std::size_t) {
                return end * t + a * std::sin(std::numbers::pi * t) + b * std::sin(2.0 * std::numbers::pi * t);
            });
            ASSERT_TRUE(e.contains(g));
            EXPECT_LE(r.value.value(), rate_of_path(spec, x0, g).value() + 1e-6) << spec.name;
        }
    }
}

TEST(MinRateEvent, ZeroRateCharacterization) {
    const TimeGrid grid(1.0, 200);
    for (const auto& spec : builtin::all()) {
        const std::vector<double> x0(spec.dim_state, 0.5);
        const Path flow = solve_uncontrolled(spec, x0, grid);
        EXPECT_LT(rate_of_path(spec, x0, flow).value(), 1e-10) << spec.name;
        // Move the flow off by a smooth bump in the controlled directions.
        Control nu(grid, spec.dim_noise);
        for (std::size_t k = 0; k < grid.n_steps(); ++k) nu.values(k, 0) = 0.2 * std::sin(std::numbers::pi * grid.time(k));
        const Path moved = solve_skeleton(spec, x0, nu, grid);
        ASSERT_GT(sup_distance(moved, flow), 1e-2);
        EXPECT_GT(rate_of_path(spec, x0, moved).value(), 1e-3) << spec.name;
    }
}

TEST(Gradient, AdjointMatchesFiniteDifferences) {
    const TimeGrid grid(1.0, 40);
    StreamRng rng(3, 3);
    for (const auto& spec : builtin::all()) {
        const std::vector<double> x0(spec.dim_state, 0.2);
        Control nu(grid, spec.dim_noise);
        for (auto& v : nu.values.data()) v = rng.uniform(-1.0, 1.0);
        RowMatrix seed(grid.n_points(), spec.dim_state);
        for (auto& v : seed.data()) v = rng.uniform(-1.0, 1.0);
        const Path phi = solve_skeleton(spec, x0, nu, grid);
        const RowMatrix adj = skeleton_adjoint(spec, phi, nu, seed);
        const RowMatrix fd = skeleton_fd_gradient(spec, x0, nu, [&](const Path& p) {
            double s = 0.0;
            for (std::size_t i = 0; i < seed.data().size(); ++i) s += seed.data()[i] * p.values.data()[i];
            return s;
        });
        for (std::size_t i = 0; i < adj.data().size(); ++i)
            EXPECT_NEAR(adj.data()[i], fd.data()[i], 1e-6 * (1.0 + std::abs(fd.data()[i]))) << spec.name << " " << i;
    }
}

TEST(MinRateEvent, FiniteDifferenceOptionAgrees) {
    const TimeGrid grid(1.0, 40);
    OptimizerConfig fd;
    fd.gradient = GradientMethod::FiniteDifference;
    for (const char* name : {"ou", "delay_tanh"}) {
        const auto spec = builtin::by_name(name);
        const auto e = EventSpec::terminal_half_space({1.0}, 1.0);
        const auto a = min_rate_event(spec, kZero, e, grid);
        const auto b = min_rate_event(spec, kZero, e, grid, fd);
        ASSERT_TRUE(a.value.is_finite() && b.value.is_finite());
        EXPECT_NEAR(a.value.value(), b.value.value(), 1e-5 * a.value.value()) << name;
    }
}

TEST(MinRateEvent, EnergyCapProjectsOntoBall) {
    const TimeGrid grid(1.0, 100);
    OptimizerConfig opt;
    opt.max_energy = 0.125; // the event needs 0.5
    const auto r = min_rate_event(builtin::schilder(), kZero, EventSpec::terminal_point({1.0}, 0.0), grid, opt);
    EXPECT_LE(control_energy(r.minimizer_control), 0.125 * (1.0 + 1e-9));
    EXPECT_TRUE(r.value.is_infinite());
}

TEST(MinRateEvent, IsDeterministic) {
    const TimeGrid grid(1.0, 100);
    const auto e = EventSpec::terminal_half_space({1.0}, 1.0);
    const auto a = min_rate_event(builtin::delay_tanh(), kZero, e, grid);
    const auto b = min_rate_event(builtin::delay_tanh(), kZero, e, grid);
    EXPECT_EQ(a.minimizer_control.values, b.minimizer_control.values);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(EventSpec, ValidationAndMembership) {
    EXPECT_THROW(EventSpec::terminal_ball({0.0}, 0.0).validate(1), InvalidArgument);
    EXPECT_THROW(EventSpec::terminal_half_space({0.0}, 1.0).validate(1), InvalidArgument);
    EXPECT_THROW(EventSpec::sup_norm_exceed(-1.0).validate(1), InvalidArgument);
    EXPECT_THROW(EventSpec::terminal_point({0.0, 1.0}, 0.1).validate(1), InvalidArgument);
    const TimeGrid grid(1.0, 4);
    const Path g = path_from(grid, 1, [](double t, std::size_t) { return 2.0 * t * (1.0 - t); });
    EXPECT_TRUE(EventSpec::sup_norm_exceed(0.5).contains(g));
    EXPECT_FALSE(EventSpec::sup_norm_exceed(0.51).contains(g));
    EXPECT_TRUE(EventSpec::terminal_ball({0.05}, 0.1).contains(g));
    EXPECT_FALSE(EventSpec::terminal_half_space({1.0}, 0.1).contains(g));
}
