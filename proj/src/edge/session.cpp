#include "falldef/edge/session.hpp"

#include <chrono>
#include <cmath>

#include "falldef/error.hpp"

namespace falldef::edge {

void ServeConfig::validate() const {
  if (!(alert_threshold > 0.0 && alert_threshold <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "alert threshold must be in (0, 1]", "threshold");
  }
  if (!(cooldown_s >= 0.0) || !std::isfinite(cooldown_s)) {
    throw Error(ErrorKind::InvalidArgument, "cooldown must be >= 0 seconds", "cooldown");
  }
  if (stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1", "stride");
  if (!(retry.backoff_base_s >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "retry backoff must be >= 0", "retry-backoff");
  }
}

SlidingBuffer::SlidingBuffer(std::size_t capacity)
    : times_(capacity), values_(capacity * 3) {
  if (capacity == 0) throw Error(ErrorKind::InvalidArgument, "sliding buffer capacity must be > 0");
}

void SlidingBuffer::push(const StreamEvent& ev) {
  times_[head_] = ev.t;
  values_[head_ * 3 + 0] = ev.ax;
  values_[head_ * 3 + 1] = ev.ay;
  values_[head_ * 3 + 2] = ev.az;
  head_ = (head_ + 1) % capacity();
  if (size_ < capacity()) ++size_;
}

Matrix SlidingBuffer::window() const {
  if (!full()) throw Error(ErrorKind::Shape, "sliding buffer is not full");
  const std::size_t n = capacity();
  Matrix m(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t slot = (head_ + i) % n;
    for (std::size_t c = 0; c < 3; ++c) m(i, c) = values_[slot * 3 + c];
  }
  return m;
}

double SlidingBuffer::oldest_t() const {
  return times_[(head_ + capacity() - size_) % capacity()];
}

double SlidingBuffer::newest_t() const { return times_[(head_ + capacity() - 1) % capacity()]; }

Session::Session(const DgruModel& model, const ServeConfig& cfg)
    : model_(model),
      threshold_(cfg.alert_threshold),
      cooldown_(cfg.cooldown_s),
      stride_(cfg.stride),
      buffer_(model.arch.window_size) {
  cfg.validate();
  if (model.arch.input_dim != 3) {
    throw Error(ErrorKind::Shape, "serving needs a model over 3 acceleration channels");
  }
}

StepOutcome Session::step(const StreamEvent& ev) {
  StepOutcome out;
  out.time_regressed = last_t_ && ev.t < *last_t_;
  last_t_ = ev.t;
  ++summary_.events;
  buffer_.push(ev);
  ++since_classified_;
  if (!buffer_.full()) return out;
  // The first full window is classified immediately; afterwards every
  // `stride` samples.
  if (summary_.classifications > 0 && since_classified_ < stride_) return out;
  since_classified_ = 0;

  const Prediction pred = predict(model_, buffer_.window());
  ++summary_.classifications;
  out.prediction = pred;
  const double now_t = buffer_.newest_t();
  if (pred.p_fall >= threshold_ && (!last_alert_t_ || now_t - *last_alert_t_ >= cooldown_)) {
    last_alert_t_ = now_t;
    ++summary_.alerts;
    out.alert = AlertEvent{pred.p_fall, buffer_.oldest_t(), now_t, wall_clock_seconds()};
  }
  return out;
}

double wall_clock_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

}  // namespace falldef::edge
