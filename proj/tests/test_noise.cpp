#include "ebridge/noise.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdint>

using namespace ebridge;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers) {
  using Ctr = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;
  EXPECT_EQ(philox4x32(Ctr{0, 0, 0, 0}, Key{0, 0}),
            (Ctr{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32(Ctr{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       Key{0xffffffffu, 0xffffffffu}),
            (Ctr{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32(Ctr{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       Key{0xa4093822u, 0x299f31d0u}),
            (Ctr{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterRng, UniformsInOpenInterval) {
  const CounterRng rng(7, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = rng.uniform(i);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(CounterRng, StreamsDiffer) {
  EXPECT_NE(CounterRng(7, 0).uniform(0), CounterRng(7, 1).uniform(0));
  EXPECT_NE(CounterRng(7, 0).uniform(0), CounterRng(8, 0).uniform(0));
}

TEST(SampleNoise, SameSeedIsBitwiseIdentical) {
  const TimeGrid g(1.0, 500);
  const NoiseHistory a = sample_noise(42, g, 2);
  const NoiseHistory b = sample_noise(42, g, 2);
  ASSERT_EQ(a.size(), g.steps());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.increment(i), b.increment(i));
}

TEST(SampleNoise, DifferentSeedsDiffer) {
  const TimeGrid g(1.0, 10);
  EXPECT_NE(sample_noise(1, g, 1).increment(0)(0), sample_noise(2, g, 1).increment(0)(0));
}

TEST(SampleNoise, VarianceMatchesDt) {
  const TimeGrid g(2.0, 100000);
  const NoiseHistory h = sample_noise(3, g, 1);
  double mean = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mean += h.increment(i)(0);
  mean /= static_cast<double>(h.size());
  double var = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double r = h.increment(i)(0) - mean;
    var += r * r;
  }
  var /= static_cast<double>(h.size() - 1);
  EXPECT_NEAR(var / g.dt(), 1.0, 0.02);
}

TEST(SampleNoise, ComponentsUncorrelated) {
  const TimeGrid g(1.0, 50000);
  const NoiseHistory h = sample_noise(11, g, 2);
  double cross = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) cross += h.increment(i)(0) * h.increment(i)(1);
  cross /= static_cast<double>(h.size()) * g.dt();
  EXPECT_LT(std::abs(cross), 0.03);
}

TEST(NoiseHistory, CoarsenSumsPairs) {
  const TimeGrid g(1.0, 8);
  const NoiseHistory h = sample_noise(5, g, 1);
  const NoiseHistory c = h.coarsen();
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.grid(), TimeGrid(1.0, 4));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(c.increment(i), h.increment(2 * i) + h.increment(2 * i + 1));
  }
}

TEST(NoiseHistory, RejectsWrongLength) {
  EXPECT_THROW(NoiseHistory(TimeGrid(1.0, 4), std::vector<Vector>(3, Vector::Zero(1)), 0),
               std::exception);
  EXPECT_THROW(sample_noise(1, TimeGrid(1.0, 6), 1).coarsen().coarsen(), std::exception);
}
