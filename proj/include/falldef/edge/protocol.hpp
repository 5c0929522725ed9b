#pragma once

// Wire protocol of the streaming service. Both directions carry one JSON
// object per line.
//
// Client -> server, one sample per line:
//   {"t": 1.0, "ax": 0.02, "ay": -0.98, "az": 0.01}
//     t          event time in seconds (nondecreasing per connection)
//     ax, ay, az acceleration in g
//   Unknown fields are ignored.
//
// Server -> client:
//   {"type":"ack","seq":n,"t":t,"classified":bool,"p_fall":p}
//       one per accepted sample; p_fall is present only when classified
//   {"type":"alert","p_fall":p,"window_start_t":t0,"window_end_t":t1,"emitted_at":w}
//       emitted_at is wall-clock seconds since the Unix epoch
//   {"type":"error","line":n,"message":"...","field":"az"}
//       malformed line; the connection stays open. "field" may be absent.
//   {"type":"summary","events":n,"classifications":c,"alerts":a,"errors":e}
//       sent once the client half-closes its side

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace falldef::edge {

struct StreamEvent {
  double t = 0.0;
  double ax = 0.0, ay = 0.0, az = 0.0;
  bool operator==(const StreamEvent&) const = default;
};

struct AlertEvent {
  double p_fall = 0.0;
  double window_start_t = 0.0;
  double window_end_t = 0.0;
  double emitted_at = 0.0;
  bool operator==(const AlertEvent&) const = default;
};

struct SessionSummary {
  std::size_t events = 0;
  std::size_t classifications = 0;
  std::size_t alerts = 0;
  std::size_t errors = 0;
  bool operator==(const SessionSummary&) const = default;
};

/// Throws Error(Parse) naming the offending field when there is one.
StreamEvent decode_event(std::string_view line);
std::string encode_event(const StreamEvent& ev);

std::string encode_ack(std::size_t seq, double t, std::optional<double> p_fall);
std::string encode_alert(const AlertEvent& alert);
std::string encode_error(std::size_t line, const std::string& message, const std::string& field);
std::string encode_summary(const SessionSummary& s);

/// A decoded server response. Fields not carried by `type` keep defaults.
struct Response {
  std::string type;
  std::size_t seq = 0;
  double t = 0.0;
  bool classified = false;
  std::optional<double> p_fall;
  AlertEvent alert;
  std::size_t line = 0;
  std::string message;
  std::string field;
  SessionSummary summary;
};

Response decode_response(std::string_view line);

/// Alert document as posted to webhooks and written to the alert log.
AlertEvent decode_alert(std::string_view text);

}  // namespace falldef::edge
