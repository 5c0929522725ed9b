#include "falldef/edge/alerts.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include "falldef/error.hpp"
#include "falldef/text_format.hpp"
#include "httplib.h"

namespace falldef::edge {

std::string alert_document(const AlertEvent& a) {
  return "{\"p_fall\":" + format_double(a.p_fall) + ",\"window_start_t\":" +
         format_double(a.window_start_t) + ",\"window_end_t\":" + format_double(a.window_end_t) +
         ",\"emitted_at\":" + format_double(a.emitted_at) + "}";
}

WebhookTarget parse_webhook_url(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) {
    throw Error(ErrorKind::InvalidArgument, "webhook must be an http:// URL: '" + url + "'",
                "webhook");
  }
  const auto slash = url.find('/', scheme.size());
  WebhookTarget t;
  t.origin = url.substr(0, slash);
  t.path = slash == std::string::npos ? "/" : url.substr(slash);
  if (t.origin.size() == scheme.size()) {
    throw Error(ErrorKind::InvalidArgument, "webhook URL has no host: '" + url + "'", "webhook");
  }
  return t;
}

namespace {

void real_sleep(double seconds) {
  if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

}  // namespace

DeliveryResult post_alert(const AlertEvent& alert, const std::string& webhook_url,
                          const RetryPolicy& retry, const SleepFn& sleep) {
  DeliveryResult res;
  WebhookTarget target;
  try {
    target = parse_webhook_url(webhook_url);
  } catch (const Error& e) {
    res.last_error = e.what();
    return res;
  }
  httplib::Client client(target.origin);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  client.set_write_timeout(5, 0);
  const std::string body = alert_document(alert);
  for (std::size_t attempt = 0; attempt <= retry.retries; ++attempt) {
    if (attempt > 0) {
      const double delay = retry.backoff_base_s * std::ldexp(1.0, static_cast<int>(attempt) - 1);
      sleep ? sleep(delay) : real_sleep(delay);
    }
    ++res.attempts;
    auto reply = client.Post(target.path, body, "application/json");
    if (!reply) {
      res.last_error = "request failed: " + httplib::to_string(reply.error());
      continue;
    }
    if (reply->status >= 200 && reply->status < 300) {
      res.delivered = true;
      res.last_error.clear();
      return res;
    }
    res.last_error = "HTTP status " + std::to_string(reply->status);
  }
  return res;
}

void append_alert_log(const std::string& path, const AlertEvent& alert) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open alert log " + path);
  out << alert_document(alert) << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "failed writing alert log " + path);
}

DeliveryResult dispatch_alert(const AlertEvent& alert, const ServeConfig& cfg,
                              const SleepFn& sleep) {
  if (!cfg.alert_log.empty()) append_alert_log(cfg.alert_log, alert);
  if (cfg.webhook.empty()) return {true, 0, {}};
  DeliveryResult res = post_alert(alert, cfg.webhook, cfg.retry, sleep);
  if (!res.delivered) {
    std::cerr << "falldef: webhook delivery failed after " << res.attempts
              << " attempts: " << res.last_error << "\n";
  }
  return res;
}

AlertDispatcher::AlertDispatcher(const ServeConfig& cfg, SleepFn sleep)
    : cfg_(cfg), sleep_(std::move(sleep)) {
  if (!cfg_.webhook.empty()) {
    parse_webhook_url(cfg_.webhook);
    thread_ = std::thread([this] { worker(); });
  }
}

AlertDispatcher::~AlertDispatcher() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

bool AlertDispatcher::submit(const AlertEvent& alert) {
  if (!cfg_.alert_log.empty()) {
    std::lock_guard lock(log_mu_);
    try {
      append_alert_log(cfg_.alert_log, alert);
    } catch (const Error& e) {
      std::cerr << "falldef: " << e.what() << "\n";
    }
  }
  std::lock_guard lock(mu_);
  ++stats_.logged;
  if (cfg_.webhook.empty()) return true;
  if (queue_.size() >= cfg_.queue_capacity) {
    ++stats_.dropped;
    return false;
  }
  queue_.push_back(alert);
  cv_.notify_one();
  return true;
}

void AlertDispatcher::drain() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

AlertDispatcher::Stats AlertDispatcher::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void AlertDispatcher::worker() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) break;  // stopping with nothing left
    AlertEvent alert = queue_.front();
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    DeliveryResult res = post_alert(alert, cfg_.webhook, cfg_.retry, sleep_);
    if (!res.delivered) {
      std::cerr << "falldef: webhook delivery failed after " << res.attempts
                << " attempts: " << res.last_error << "\n";
    }
    lock.lock();
    busy_ = false;
    ++(res.delivered ? stats_.delivered : stats_.failed);
    idle_cv_.notify_all();
  }
  busy_ = false;
  idle_cv_.notify_all();
}

}  // namespace falldef::edge
