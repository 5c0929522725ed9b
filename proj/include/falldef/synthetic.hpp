#pragma once

// Synthetic accelerometer recordings for desk-scale runs: ADL-like motion
// (gravity plus slow drift, periodic arm swing and sensor noise) with fall
// events embedded as bursts of high-magnitude samples. Burst samples carry
// the fall point label; everything else is non-fall.

#include <cstdint>
#include <vector>

#include "falldef/dataset.hpp"

namespace falldef {

struct SyntheticConfig {
  std::size_t segments = 70;
  std::size_t segment_length = 1000;
  std::size_t bursts_per_segment = 1;
  std::size_t burst_length = 40;
  /// Minimum number of samples between bursts and from the segment edges.
  std::size_t burst_margin = 60;
  double rate_hz = 31.25;
  double spike_min_g = 2.0;
  double spike_max_g = 4.0;
  double noise_g = 0.05;
  std::uint64_t seed = 7;
};

std::vector<Segment> generate_synthetic(const SyntheticConfig& cfg);

/// One recording with bursts starting at exactly the given sample indices.
/// Uses the shape parameters of `cfg` (burst length, rate, magnitudes).
Segment synthetic_recording(std::size_t length, const std::vector<std::size_t>& burst_starts,
                            const SyntheticConfig& cfg, Rng& rng,
                            const std::string& id = "synthetic");

}  // namespace falldef
