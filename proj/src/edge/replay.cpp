#include "falldef/edge/replay.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "falldef/error.hpp"

namespace falldef::edge {

std::vector<StreamEvent> to_events(const std::vector<Sample>& samples, double rate_hz) {
  std::vector<StreamEvent> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    out.push_back({s.t ? *s.t : static_cast<double>(i) / rate_hz, s.ax, s.ay, s.az});
  }
  return out;
}

std::vector<FallRegion> fall_regions(const std::vector<Sample>& samples,
                                     const std::vector<StreamEvent>& events) {
  std::vector<FallRegion> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].point_label != Label::Fall) continue;
    if (!out.empty() && out.back().last + 1 == i) {
      out.back().last = i;
      out.back().end_t = events[i].t;
    } else {
      out.push_back({i, i, events[i].t, events[i].t});
    }
  }
  return out;
}

void match_alerts(ReplaySummary& summary, const std::vector<FallRegion>& regions,
                  const std::vector<double>& send_wall_s) {
  summary.regions.clear();
  for (const auto& r : regions) summary.regions.push_back({r, 0, std::nullopt, std::nullopt});
  summary.unmatched_alerts = 0;
  for (const auto& a : summary.alerts) {
    bool matched = false;
    for (auto& m : summary.regions) {
      if (a.alert.window_end_t < m.region.onset_t || a.alert.window_start_t > m.region.end_t) continue;
      matched = true;
      if (m.alerts++ == 0) {
        m.event_latency_s = a.alert.window_end_t - m.region.onset_t;
        if (m.region.first < send_wall_s.size()) {
          m.wall_latency_s = a.received_wall_s - send_wall_s[m.region.first];
        }
      }
      break;
    }
    if (!matched) ++summary.unmatched_alerts;
  }
}

ReplaySummary replay(const std::vector<Sample>& samples, const ReplayConfig& cfg) {
  if (!(cfg.rate_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "rate must be > 0", "rate");
  if (!(cfg.speedup >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "speedup must be >= 0", "speedup");
  }
  const std::vector<StreamEvent> events = to_events(samples, cfg.rate_hz);
  const bool paced = cfg.speedup > 0.0 && std::isfinite(cfg.speedup);
  const double period = paced ? 1.0 / (cfg.rate_hz * cfg.speedup) : 0.0;

  Socket sock = Socket::connect_to(cfg.target);
  ReplaySummary summary;
  std::mutex mu;
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto since_start = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  std::string reader_error;
  std::thread reader([&] {
    LineReader lines(sock.fd());
    while (auto line = lines.next()) {
      if (line->empty()) continue;
      try {
        Response r = decode_response(*line);
        const double now = since_start();
        std::lock_guard lock(mu);
        if (r.type == "ack") {
          ++summary.acks;
          if (r.classified) ++summary.classifications;
        } else if (r.type == "alert") {
          summary.alerts.push_back({r.alert, now});
        } else if (r.type == "error") {
          ++summary.errors;
        } else if (r.type == "summary") {
          summary.server_summary = r.summary;
        }
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        reader_error = e.what();
      }
    }
  });

  std::vector<double> send_wall(events.size());
  std::size_t sent = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (paced) std::this_thread::sleep_until(t0 + std::chrono::duration<double>(period * i));
    send_wall[i] = since_start();
    if (!sock.send_all(encode_event(events[i]) + "\n")) break;
    ++sent;
  }
  sock.shutdown_write();
  reader.join();

  summary.events_sent = sent;
  summary.elapsed_s = since_start();
  summary.labeled = !samples.empty();
  for (const auto& s : samples) {
    if (!s.point_label) {
      summary.labeled = false;
      break;
    }
  }
  if (summary.labeled) match_alerts(summary, fall_regions(samples, events), send_wall);
  if (!reader_error.empty() && !summary.server_summary) {
    throw Error(ErrorKind::Network, "bad response from server: " + reader_error);
  }
  return summary;
}

ReplaySummary replay_file(const std::filesystem::path& path, const CsvSchema& schema,
                          const ReplayConfig& cfg) {
  std::vector<Sample> all;
  for (auto& seg : parse_csv_file(path, schema)) {
    all.insert(all.end(), seg.samples.begin(), seg.samples.end());
  }
  if (all.empty()) throw Error(ErrorKind::EmptyInput, "no samples in " + path.string());
  return replay(all, cfg);
}

std::string format_replay_summary(const ReplaySummary& s) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf,
                "events sent      %zu\nacks             %zu\nclassifications  %zu\n"
                "alerts received  %zu\nerror responses  %zu\nelapsed          %.2f s\n",
                s.events_sent, s.acks, s.classifications, s.alerts.size(), s.errors, s.elapsed_s);
  out += buf;
  for (const auto& a : s.alerts) {
    std::snprintf(buf, sizeof buf, "alert  p_fall=%.4f window=[%.3f, %.3f] s\n", a.alert.p_fall,
                  a.alert.window_start_t, a.alert.window_end_t);
    out += buf;
  }
  if (!s.labeled) return out + "ground truth     none (recording has no labels)\n";
  std::size_t detected = 0;
  for (const auto& m : s.regions) {
    if (m.alerts > 0) ++detected;
    std::snprintf(buf, sizeof buf, "fall region [%.3f, %.3f] s: %zu alert(s)", m.region.onset_t,
                  m.region.end_t, m.alerts);
    out += buf;
    if (m.event_latency_s) {
      std::snprintf(buf, sizeof buf, ", latency %.3f s event time", *m.event_latency_s);
      out += buf;
    }
    if (m.wall_latency_s) {
      std::snprintf(buf, sizeof buf, ", %.3f s wall", *m.wall_latency_s);
      out += buf;
    }
    out += "\n";
  }
  std::snprintf(buf, sizeof buf, "regions detected %zu/%zu\nfalse alerts     %zu\n", detected,
                s.regions.size(), s.unmatched_alerts);
  return out + buf;
}

}  // namespace falldef::edge
