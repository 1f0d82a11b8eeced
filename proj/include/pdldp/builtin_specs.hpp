#pragma once

#include <string>
#include <vector>

#include "pdldp/coefficients.hpp"

namespace pdldp::builtin {

/// b = 0, sigma = 1 in one dimension (Brownian motion).
inline CoefficientSpec schilder() {
    CoefficientSpec s;
    s.name = "schilder";
    s.drift = MapDescriptor::zero(1, 1);
    s.diffusion = MapDescriptor::constant({1.0}, 1);
    s.growth_const = 1.0;
    s.lipschitz_table = {{1e6, 0.0}};
    s.validate();
    return s;
}

/// Ornstein-Uhlenbeck: b(x) = -x, sigma = 1.
inline CoefficientSpec ornstein_uhlenbeck() {
    CoefficientSpec s;
    s.name = "ou";
    s.drift = MapDescriptor::affine(1, 1, {-1.0}, {0.0});
    s.diffusion = MapDescriptor::constant({1.0}, 1);
    s.growth_const = 1.0;
    s.lipschitz_table = {{1e6, 1.0}};
    s.validate();
    return s;
}

/// Drift equal to the running maximum of the path, unit noise.
inline CoefficientSpec running_max_feedback() {
    CoefficientSpec s;
    s.name = "running_max";
    s.features = {PathFeature::running_max()};
    s.drift = MapDescriptor::affine(1, 1, {1.0}, {0.0});
    s.diffusion = MapDescriptor::constant({1.0}, 1);
    s.growth_const = 1.0;
    s.lipschitz_table = {{1e6, 1.0}};
    s.validate();
    return s;
}

/// Delay equation with bounded nonlinear feedback and a path-dependent
/// diffusion: b = -x(t) + 0.5 tanh(x(t - 0.25)),
/// sigma = 0.8 + 0.4 logistic(running average of x).
inline CoefficientSpec delay_tanh() {
    CoefficientSpec s;
    s.name = "delay_tanh";
    s.features = {PathFeature::current(), PathFeature::lagged(0.25),
                  PathFeature::running_average()};
    s.drift = MapDescriptor::sum(
        MapDescriptor::affine(1, 3, {-1.0, 0.0, 0.0}, {0.0}),
        MapDescriptor::sigmoid(MapDescriptor::Kind::Tanh, 1, 3, {0.0, 1.0, 0.0}, {0.0}, {0.5}, {0.0}));
    s.diffusion = MapDescriptor::sigmoid(MapDescriptor::Kind::Logistic, 1, 3, {0.0, 0.0, 1.0},
                                         {0.0}, {0.4}, {0.8});
    // |b| + |sigma| <= |x| + 0.5 + 1.2
    s.growth_const = 1.7;
    // 1 + 0.5 from the drift, 0.4/4 from the logistic slope
    s.lipschitz_table = {{1e6, 1.6}};
    s.validate();
    return s;
}

/// Two-dimensional damped oscillator with integral feedback, driven by one
/// noise channel on the velocity whose amplitude depends on the position:
///   b = (x2, -x1 - 0.5 x2 - 0.2 int_0^t x1),
///   sigma = (0, 1 + 0.3 tanh(x1))^T.
inline CoefficientSpec integral_oscillator() {
    CoefficientSpec s;
    s.name = "integral_oscillator";
    s.dim_state = 2;
    s.dim_noise = 1;
    s.features = {PathFeature::current(), PathFeature::running_integral()};
    // z = (x1, x2, I1, I2)
    s.drift = MapDescriptor::affine(2, 4,
                                    {0.0, 1.0, 0.0, 0.0,   //
                                     -1.0, -0.5, -0.2, 0.0},
                                    {0.0, 0.0});
    s.diffusion = MapDescriptor::product(
        MapDescriptor::constant({0.0, 1.0}, 4),
        MapDescriptor::sigmoid(MapDescriptor::Kind::Tanh, 2, 4,
                               {1.0, 0.0, 0.0, 0.0,   //
                                1.0, 0.0, 0.0, 0.0},
                               {0.0, 0.0}, {0.3, 0.3}, {1.0, 1.0}));
    // |b| <= (2.5 + 0.2 t) sup|x| and |sigma| <= 1.3; valid for t <= 2.5
    s.growth_const = 3.0;
    s.lipschitz_table = {{1e6, 3.0}};
    s.validate();
    return s;
}

inline std::vector<CoefficientSpec> all() {
    return {schilder(), ornstein_uhlenbeck(), running_max_feedback(), delay_tanh(),
            integral_oscillator()};
}

inline CoefficientSpec by_name(const std::string& name) {
    for (auto& s : all())
        if (s.name == name) return s;
    throw InvalidArgument("unknown built-in spec '" + name + "'");
}

} // namespace pdldp::builtin
