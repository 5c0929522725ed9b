#include "falldef/synthetic.hpp"

#include <cmath>

#include "falldef/error.hpp"

namespace falldef {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct AdlProfile {
  double drift_hz, drift_phase, tilt;
  double swing_g, swing_hz, swing_phase;
  double swing_axis[3];
  double jolt_rate_hz;
};

AdlProfile random_profile(Rng& rng) {
  AdlProfile p{};
  p.drift_hz = rng.uniform(0.02, 0.1);
  p.drift_phase = rng.uniform(0.0, kTwoPi);
  p.tilt = rng.uniform(0.0, 0.35);
  p.swing_g = rng.uniform(0.0, 0.5);
  p.swing_hz = rng.uniform(0.8, 2.5);
  p.swing_phase = rng.uniform(0.0, kTwoPi);
  double n = 0.0;
  for (double& a : p.swing_axis) {
    a = rng.normal();
    n += a * a;
  }
  n = std::sqrt(n);
  for (double& a : p.swing_axis) a /= n;
  p.jolt_rate_hz = rng.uniform(0.02, 0.15);
  return p;
}

}  // namespace

Segment synthetic_recording(std::size_t length, const std::vector<std::size_t>& burst_starts,
                            const SyntheticConfig& cfg, Rng& rng, const std::string& id) {
  Segment seg;
  seg.id = id;
  seg.samples.resize(length);
  const AdlProfile p = random_profile(rng);
  std::size_t jolt_left = 0;
  double jolt[3] = {0, 0, 0};
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / cfg.rate_hz;
    const double drift = kTwoPi * p.drift_hz * t + p.drift_phase;
    double a[3] = {p.tilt * std::sin(drift), -std::sqrt(1.0 - p.tilt * p.tilt * 0.5),
                   p.tilt * std::cos(drift)};
    const double swing = p.swing_g * std::sin(kTwoPi * p.swing_hz * t + p.swing_phase);
    if (jolt_left == 0 && rng.uniform() < p.jolt_rate_hz / cfg.rate_hz) {
      jolt_left = 3 + static_cast<std::size_t>(rng.below(4));
      const double mag = rng.uniform(0.3, 0.9);
      for (double& j : jolt) j = rng.normal();
      const double n = std::sqrt(jolt[0] * jolt[0] + jolt[1] * jolt[1] + jolt[2] * jolt[2]);
      for (double& j : jolt) j *= mag / n;
    }
    for (int k = 0; k < 3; ++k) {
      a[k] += swing * p.swing_axis[k] + cfg.noise_g * rng.normal();
      if (jolt_left > 0) a[k] += jolt[k];
    }
    if (jolt_left > 0) --jolt_left;
    Sample& s = seg.samples[i];
    s.t = t;
    s.ax = a[0];
    s.ay = a[1];
    s.az = a[2];
    s.point_label = Label::NonFall;
  }
  for (std::size_t start : burst_starts) {
    if (start + cfg.burst_length > length) {
      throw Error(ErrorKind::InvalidArgument, "burst does not fit in the recording");
    }
    for (std::size_t i = start; i < start + cfg.burst_length; ++i) {
      double dir[3];
      double n = 0.0;
      for (double& d : dir) {
        d = rng.normal();
        n += d * d;
      }
      n = std::sqrt(n);
      const double mag = rng.uniform(cfg.spike_min_g, cfg.spike_max_g);
      Sample& s = seg.samples[i];
      s.ax += mag * dir[0] / n;
      s.ay += mag * dir[1] / n;
      s.az += mag * dir[2] / n;
      s.point_label = Label::Fall;
    }
  }
  return seg;
}

std::vector<Segment> generate_synthetic(const SyntheticConfig& cfg) {
  const std::size_t need =
      cfg.bursts_per_segment * (cfg.burst_length + cfg.burst_margin) + cfg.burst_margin;
  if (cfg.segment_length < need) {
    throw Error(ErrorKind::InvalidArgument,
                "segment_length too short for the requested bursts and margins", "segment_length");
  }
  Rng rng(cfg.seed);
  std::vector<Segment> out;
  out.reserve(cfg.segments);
  for (std::size_t s = 0; s < cfg.segments; ++s) {
    // Spread the free samples randomly across the gaps between bursts.
    const std::size_t slack = cfg.segment_length - need;
    std::vector<std::size_t> extra(cfg.bursts_per_segment + 1, 0);
    for (std::size_t k = 0; k < slack; ++k) ++extra[rng.below(extra.size())];
    std::vector<std::size_t> starts;
    std::size_t pos = cfg.burst_margin + extra[0];
    for (std::size_t b = 0; b < cfg.bursts_per_segment; ++b) {
      starts.push_back(pos);
      pos += cfg.burst_length + cfg.burst_margin + extra[b + 1];
    }
    out.push_back(synthetic_recording(cfg.segment_length, starts, cfg, rng,
                                      "synthetic-" + std::to_string(s)));
  }
  return out;
}

}  // namespace falldef
