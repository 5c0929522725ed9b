#pragma once

// Replay client: streams a recording to the service at a fixed sample rate
// and compares the alerts it gets back with fall-labeled regions.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "falldef/dataset.hpp"
#include "falldef/edge/protocol.hpp"
#include "falldef/edge/socket.hpp"

namespace falldef::edge {

struct ReplayConfig {
  HostPort target{"127.0.0.1", 7878};
  double rate_hz = 31.25;
  /// Pacing multiplier; 0 or infinity sends as fast as possible.
  double speedup = 1.0;
};

/// A maximal run of fall-labeled samples.
struct FallRegion {
  std::size_t first = 0, last = 0;  // sample indices, inclusive
  double onset_t = 0.0, end_t = 0.0;
};

struct ReceivedAlert {
  AlertEvent alert;
  double received_wall_s = 0.0;  // since the replay started
};

struct RegionMatch {
  FallRegion region;
  std::size_t alerts = 0;
  /// window_end_t of the first matching alert minus onset_t.
  std::optional<double> event_latency_s;
  /// Wall time from sending the onset sample to receiving the first alert.
  std::optional<double> wall_latency_s;
};

struct ReplaySummary {
  std::size_t events_sent = 0;
  std::size_t acks = 0;
  std::size_t classifications = 0;
  std::size_t errors = 0;
  std::vector<ReceivedAlert> alerts;
  std::optional<SessionSummary> server_summary;
  bool labeled = false;
  std::vector<RegionMatch> regions;
  /// Alerts whose window overlaps no fall region.
  std::size_t unmatched_alerts = 0;
  double elapsed_s = 0.0;
};

/// Event times: the sample's t when present, otherwise index / rate_hz.
std::vector<StreamEvent> to_events(const std::vector<Sample>& samples, double rate_hz);
std::vector<FallRegion> fall_regions(const std::vector<Sample>& samples,
                                     const std::vector<StreamEvent>& events);

ReplaySummary replay(const std::vector<Sample>& samples, const ReplayConfig& cfg);
/// Replays every segment of the file back to back over one connection.
ReplaySummary replay_file(const std::filesystem::path& path, const CsvSchema& schema,
                          const ReplayConfig& cfg);

/// Offline alert-to-region matching (exposed for testing).
void match_alerts(ReplaySummary& summary, const std::vector<FallRegion>& regions,
                  const std::vector<double>& send_wall_s);

std::string format_replay_summary(const ReplaySummary& s);

}  // namespace falldef::edge
