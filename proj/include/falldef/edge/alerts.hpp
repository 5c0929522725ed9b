#pragma once

// Alert delivery: every alert is appended to a local log (one JSON record
// per line) and, when a webhook is configured, POSTed as the same JSON
// document with retries and exponential backoff.

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "falldef/edge/protocol.hpp"
#include "falldef/edge/session.hpp"

namespace falldef::edge {

/// Alert document without the "type" tag.
std::string alert_document(const AlertEvent& alert);

struct WebhookTarget {
  std::string origin;  // "http://host:port"
  std::string path;    // "/..." (defaults to "/")
};

/// Only plain http:// URLs are supported.
WebhookTarget parse_webhook_url(const std::string& url);

struct DeliveryResult {
  bool delivered = false;
  std::size_t attempts = 0;
  std::string last_error;
};

using SleepFn = std::function<void(double seconds)>;

/// POSTs the alert with retries. Never throws for network or HTTP failures.
DeliveryResult post_alert(const AlertEvent& alert, const std::string& webhook_url,
                          const RetryPolicy& retry, const SleepFn& sleep = {});

/// Appends one alert record to `path`. Throws Error(Io) on failure.
void append_alert_log(const std::string& path, const AlertEvent& alert);

/// Synchronous delivery: local log first, then the webhook if configured.
/// With no webhook the result is a success with zero attempts.
DeliveryResult dispatch_alert(const AlertEvent& alert, const ServeConfig& cfg,
                              const SleepFn& sleep = {});

/// Asynchronous delivery for the serve path. submit() writes the local log
/// immediately and queues the webhook POST for a worker thread, so sample
/// processing never waits on the network.
class AlertDispatcher {
 public:
  explicit AlertDispatcher(const ServeConfig& cfg, SleepFn sleep = {});
  ~AlertDispatcher();
  AlertDispatcher(const AlertDispatcher&) = delete;
  AlertDispatcher& operator=(const AlertDispatcher&) = delete;

  /// False when the webhook queue was full and this delivery was dropped.
  bool submit(const AlertEvent& alert);
  /// Blocks until every queued delivery has been attempted.
  void drain();

  struct Stats {
    std::size_t logged = 0;
    std::size_t delivered = 0;
    std::size_t failed = 0;
    std::size_t dropped = 0;
  };
  Stats stats() const;

 private:
  void worker();

  ServeConfig cfg_;
  SleepFn sleep_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<AlertEvent> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  Stats stats_;
  std::mutex log_mu_;
  std::thread thread_;
};

}  // namespace falldef::edge
