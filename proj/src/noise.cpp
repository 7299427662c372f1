#include "ebridge/noise.hpp"

#include "ebridge/error.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace ebridge {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  constexpr std::uint64_t kMul0 = 0xD2511F53;
  constexpr std::uint64_t kMul1 = 0xCD9E8D57;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = kMul0 * ctr[0];
    const std::uint64_t p1 = kMul1 * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_(stream) {}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t index, std::uint32_t lane) const {
  return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                     static_cast<std::uint32_t>(stream_),
                     (static_cast<std::uint32_t>(stream_ >> 32) & 0x7FFFFFFFu) |
                         (lane << 31)},
                    key_);
}

namespace {

double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
  // (bits + 0.5) / 2^53 lies strictly inside (0, 1).
  return (static_cast<double>(bits & ((1ULL << 53) - 1)) + 0.5) * 0x1.0p-53;
}

}  // namespace

double CounterRng::uniform(std::uint64_t index) const {
  const auto r = block(index, 1);
  return to_unit(r[0], r[1]);
}

std::array<double, 2> CounterRng::normal_pair(std::uint64_t index) const {
  const auto r = block(index, 0);
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

NoiseHistory::NoiseHistory(TimeGrid grid, std::vector<Vector> increments, std::uint64_t seed)
    : grid_(grid), increments_(std::move(increments)), seed_(seed) {
  if (increments_.size() != grid_.steps()) {
    throw ConfigError("noise history length must equal the number of grid steps");
  }
  for (const Vector& v : increments_) {
    if (!v.allFinite() || v.size() != increments_.front().size()) {
      throw NumericalError("noise history: non-finite or ragged increment");
    }
  }
}

NoiseHistory NoiseHistory::coarsen() const {
  if (grid_.steps() % 2 != 0 || grid_.steps() < 4) {
    throw ConfigError("coarsen needs an even step count of at least 4");
  }
  std::vector<Vector> out;
  out.reserve(grid_.steps() / 2);
  for (std::size_t i = 0; i + 1 < increments_.size(); i += 2) {
    out.push_back(increments_[i] + increments_[i + 1]);
  }
  return NoiseHistory(TimeGrid(grid_.tf(), grid_.steps() / 2), std::move(out), seed_);
}

NoiseHistory sample_noise(std::uint64_t seed, const TimeGrid& grid, std::size_t m,
                          std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  const double scale = std::sqrt(grid.dt());
  const std::size_t total = grid.steps() * m;
  std::vector<double> flat(total + 1);
  for (std::size_t n = 0; 2 * n < total; ++n) {
    const auto z = rng.normal_pair(n);
    flat[2 * n] = z[0];
    flat[2 * n + 1] = z[1];
  }
  std::vector<Vector> inc(grid.steps(), Vector(static_cast<Eigen::Index>(m)));
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      inc[i](static_cast<Eigen::Index>(c)) = scale * flat[i * m + c];
    }
  }
  return NoiseHistory(grid, std::move(inc), seed);
}

NoiseHistory zero_noise(const TimeGrid& grid, std::size_t m) {
  return NoiseHistory(grid,
                      std::vector<Vector>(grid.steps(), Vector::Zero(static_cast<Eigen::Index>(m))),
                      0);
}

}  // namespace ebridge
