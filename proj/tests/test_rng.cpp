#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "pdldp/rng.hpp"
#include "pdldp/sde_sim.hpp"

using namespace pdldp;

// Known-answer vectors for Philox4x32-10 from the Random123 distribution.
TEST(Philox, KnownAnswerZero) {
    const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                          {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
    const auto out = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                          {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(StreamRng, UniformInUnitInterval) {
    StreamRng rng(42, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    // mean 1/2, sd of the mean sqrt(1/12/n)
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(StreamRng, StreamsDiffer) {
    StreamRng a(7, 0), b(7, 1), c(8, 0);
    int same_ab = 0, same_ac = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
        same_ab += x == y;
        same_ac += x == z;
    }
    EXPECT_EQ(same_ab, 0);
    EXPECT_EQ(same_ac, 0);
}

TEST(BrownianDraw, DeterministicInSeedAndStream) {
    const TimeGrid grid(1.0, 64);
    const auto a = brownian_draw(grid, 3, 123, 9);
    const auto b = brownian_draw(grid, 3, 123, 9);
    EXPECT_EQ(a.increments, b.increments);
    const auto c = brownian_draw(grid, 3, 123, 10);
    EXPECT_NE(a.increments, c.increments);
}

TEST(BrownianDraw, MomentsOfAMillionIncrements) {
    const TimeGrid grid(2.0, 1000);
    const double dt = grid.dt();
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto draw = brownian_draw(grid, 1, 2024, s);
        for (double v : draw.increments.data()) {
            sum += v;
            sq += v * v;
            ++count;
        }
    }
    ASSERT_EQ(count, 1000000u);
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(dt / n));
    EXPECT_NEAR(var / dt, 1.0, 0.01);
}

TEST(BrownianDraw, IndependentAcrossStreams) {
    // Lag-0 correlation between streams s and s+1 should vanish.
    const TimeGrid grid(1.0, 1000);
    double cross = 0.0, sa = 0.0, sb = 0.0;
    const int reps = 200;
    for (int s = 0; s < reps; ++s) {
        const auto a = brownian_draw(grid, 1, 5, static_cast<std::uint64_t>(2 * s));
        const auto b = brownian_draw(grid, 1, 5, static_cast<std::uint64_t>(2 * s + 1));
        for (std::size_t k = 0; k < 1000; ++k) {
            cross += a.increments(k, 0) * b.increments(k, 0);
            sa += a.increments(k, 0) * a.increments(k, 0);
            sb += b.increments(k, 0) * b.increments(k, 0);
        }
    }
    const double corr = cross / std::sqrt(sa * sb);
    EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(reps * 1000.0));
}

TEST(BrownianDraw, RejectsZeroNoiseDimension) {
    EXPECT_THROW(brownian_draw(TimeGrid(1.0, 4), 0, 1, 0), InvalidArgument);
}
