#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "falldef/dgru.hpp"
#include "falldef/edge/alerts.hpp"
#include "falldef/edge/session.hpp"
#include "falldef/edge/socket.hpp"

namespace falldef::edge {

/// TCP streaming service. One thread and one Session per connection; the
/// model is shared read-only.
class Server {
 public:
  using LogFn = std::function<void(const std::string&)>;

  Server(DgruModel model, ServeConfig cfg, LogFn log = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting in a background thread.
  void start();
  /// Port actually bound (useful with port 0).
  unsigned short port() const { return port_; }
  /// Stops accepting, disconnects clients and joins all threads.
  void stop();

  struct Stats {
    std::size_t connections = 0;
    std::size_t events = 0;
    std::size_t alerts = 0;
    std::size_t errors = 0;
  };
  Stats stats() const;
  AlertDispatcher::Stats dispatch_stats() const { return dispatcher_.stats(); }

 private:
  void accept_loop();
  void handle(int fd);
  void log(const std::string& msg) const;

  DgruModel model_;
  ServeConfig cfg_;
  LogFn log_;
  AlertDispatcher dispatcher_;
  Socket listener_;
  unsigned short port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;

  mutable std::mutex mu_;
  std::vector<std::thread> workers_;
  std::set<int> client_fds_;
  Stats stats_;
};

}  // namespace falldef::edge
