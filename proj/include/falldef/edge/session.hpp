#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "falldef/dgru.hpp"
#include "falldef/edge/protocol.hpp"

namespace falldef::edge {

struct RetryPolicy {
  /// Retries after the first attempt; 3 means up to 4 requests.
  std::size_t retries = 3;
  /// Delay before retry k (1-based) is backoff_base_s * 2^(k-1).
  double backoff_base_s = 0.5;
};

struct ServeConfig {
  std::string bind = "0.0.0.0:7878";
  std::string model_path;
  double alert_threshold = 0.5;
  double cooldown_s = 10.0;
  std::size_t stride = 1;
  std::string webhook;  // empty: local log only
  RetryPolicy retry;
  std::string alert_log = "alerts.log";
  /// Pending webhook deliveries; alerts beyond this skip the webhook.
  std::size_t queue_capacity = 256;

  void validate() const;
};

/// Most recent `capacity` samples, oldest first.
class SlidingBuffer {
 public:
  explicit SlidingBuffer(std::size_t capacity);

  void push(const StreamEvent& ev);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return times_.size(); }
  bool full() const { return size_ == capacity(); }

  /// capacity x 3 matrix of (ax, ay, az), oldest row first. Requires full().
  Matrix window() const;
  double oldest_t() const;
  double newest_t() const;

 private:
  std::vector<double> times_;
  std::vector<double> values_;  // capacity x 3 ring
  std::size_t head_ = 0;        // next slot to write
  std::size_t size_ = 0;
};

struct StepOutcome {
  std::optional<Prediction> prediction;
  std::optional<AlertEvent> alert;
  /// The event time went backwards; the event was still accepted.
  bool time_regressed = false;
};

/// Per-connection state: sliding buffer, stride counter and alert cooldown.
/// The model is borrowed and must outlive the session.
class Session {
 public:
  Session(const DgruModel& model, const ServeConfig& cfg);

  StepOutcome step(const StreamEvent& ev);
  const SessionSummary& summary() const { return summary_; }
  void count_error() { ++summary_.errors; }

 private:
  const DgruModel& model_;
  double threshold_;
  double cooldown_;
  std::size_t stride_;
  SlidingBuffer buffer_;
  std::size_t since_classified_ = 0;
  std::optional<double> last_alert_t_;
  std::optional<double> last_t_;
  SessionSummary summary_;
};

double wall_clock_seconds();

}  // namespace falldef::edge
