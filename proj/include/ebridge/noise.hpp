#pragma once

#include "ebridge/ensemble.hpp"
#include "ebridge/linalg.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ebridge {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (key, counter), so streams are reproducible regardless of
/// how work is split across threads.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Deterministic source of uniforms and standard normals addressed by
/// (seed, stream, index).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in (0, 1), 53-bit resolution.
  double uniform(std::uint64_t index) const;
  /// Pair of independent N(0,1) draws (Box-Muller on block `index`).
  std::array<double, 2> normal_pair(std::uint64_t index) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t index, std::uint32_t lane) const;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
};

/// Brownian increments dW_i ~ N(0, dt I_m) on a TimeGrid.
class NoiseHistory {
 public:
  NoiseHistory(TimeGrid grid, std::vector<Vector> increments, std::uint64_t seed);

  const TimeGrid& grid() const { return grid_; }
  std::size_t size() const { return increments_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(increments_.front().size()); }
  const Vector& increment(std::size_t i) const { return increments_[i]; }
  std::uint64_t seed() const { return seed_; }

  /// Replace increment i (used by causality tests).
  void set_increment(std::size_t i, Vector v) { increments_[i] = std::move(v); }

  /// Sum of consecutive increment pairs: the same Brownian path on a grid with
  /// half as many steps. Requires an even step count.
  NoiseHistory coarsen() const;

 private:
  TimeGrid grid_;
  std::vector<Vector> increments_;
  std::uint64_t seed_;
};

/// k i.i.d. N(0, dt I_m) increments from the counter generator; identical
/// arguments give bitwise-identical histories.
NoiseHistory sample_noise(std::uint64_t seed, const TimeGrid& grid, std::size_t m,
                          std::uint64_t stream = 0);

/// A history with every increment zero.
NoiseHistory zero_noise(const TimeGrid& grid, std::size_t m);

}  // namespace ebridge
