#pragma once

// WebSocket transport for LiveService: one JSON object per text frame. All
// connections are served from a single thread, so messages of a session are
// handled strictly in order.

#include <memory>
#include <string>

#include "homedqn/harness.hpp"

namespace homedqn {

class LiveServer {
 public:
  /// Binds immediately; port 0 picks a free port.
  LiveServer(PhaseConfig cfg, unsigned short port, const std::string& address = "127.0.0.1");
  ~LiveServer();

  unsigned short port() const;
  /// Serves until stop() is called.
  void run();
  /// SIGINT and SIGTERM end run().
  void stop_on_signals();
  /// Safe to call from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving on `address:port`; returns the process exit code.
int run_live_server(const PhaseConfig& cfg, unsigned short port,
                    const std::string& address = "127.0.0.1");

}  // namespace homedqn
