#include "falldef/edge/server.hpp"

#include <sys/socket.h>

#include <iostream>

#include "falldef/error.hpp"

namespace falldef::edge {

Server::Server(DgruModel model, ServeConfig cfg, LogFn log)
    : model_(std::move(model)), cfg_(std::move(cfg)), log_(std::move(log)), dispatcher_(cfg_) {
  cfg_.validate();
  check_params(model_.arch, model_.params);
}

Server::~Server() { stop(); }

void Server::log(const std::string& msg) const {
  if (log_) log_(msg);
  else std::cerr << "falldef serve: " << msg << "\n";
}

void Server::start() {
  listener_ = Socket::listen_on(parse_host_port(cfg_.bind));
  port_ = listener_.local_port();
  stopping_ = false;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  stopping_ = true;
  if (accept_thread_.joinable()) accept_thread_.join();
  listener_.close();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
}

Server::Stats Server::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Server::accept_loop() {
  while (!stopping_) {
    auto client = listener_.accept_for(std::chrono::milliseconds(100));
    if (!client) continue;
    std::lock_guard lock(mu_);
    if (stopping_) break;
    ++stats_.connections;
    const int fd = client->release();
    client_fds_.insert(fd);
    workers_.emplace_back([this, fd] { handle(fd); });
  }
}

void Server::handle(int fd) {
  Socket sock(fd);
  Session session(model_, cfg_);
  LineReader reader(fd);
  std::size_t line_no = 0;
  bool peer_alive = true;
  auto send = [&](const std::string& line) {
    if (peer_alive) peer_alive = sock.send_all(line + "\n");
  };

  while (auto line = reader.next()) {
    ++line_no;
    if (line->find_first_not_of(" \t\r") == std::string::npos) continue;
    StreamEvent ev;
    try {
      ev = decode_event(*line);
    } catch (const Error& e) {
      session.count_error();
      send(encode_error(line_no, e.what(), e.field()));
      continue;
    }
    StepOutcome out;
    try {
      out = session.step(ev);
    } catch (const std::exception& e) {
      send(encode_error(line_no, std::string("inference failed: ") + e.what(), {}));
      log(std::string("closing connection after inference failure: ") + e.what());
      break;
    }
    if (out.time_regressed) log("event time went backwards at line " + std::to_string(line_no));
    send(encode_ack(session.summary().events, ev.t,
                    out.prediction ? std::optional<double>(out.prediction->p_fall) : std::nullopt));
    if (out.alert) {
      dispatcher_.submit(*out.alert);
      send(encode_alert(*out.alert));
      log("fall alert p_fall=" + std::to_string(out.alert->p_fall) + " window_end_t=" +
          std::to_string(out.alert->window_end_t));
    }
    if (!peer_alive) break;
  }
  send(encode_summary(session.summary()));

  std::lock_guard lock(mu_);
  const SessionSummary& s = session.summary();
  stats_.events += s.events;
  stats_.alerts += s.alerts;
  stats_.errors += s.errors;
  client_fds_.erase(fd);
}

}  // namespace falldef::edge
