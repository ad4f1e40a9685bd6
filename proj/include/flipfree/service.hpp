#pragma once

// HTTP + websocket front end for an interactive deformation session.
//   GET /healthz   -> {"status": "ok", "version": "..."}
//   GET /session   -> websocket; see protocol.hpp for the messages

#include "flipfree/session.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace flipfree {

std::string build_version();

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::chrono::milliseconds throttle{33};
  std::size_t binary_threshold = 10000;
};

/// One session shared by successive connections; the newest connection
/// receives the events. State survives disconnects until a reset.
class DeformService {
 public:
  /// Binds the listening socket; throws std::runtime_error if that fails.
  DeformService(Mesh mesh, SolverConfig config, ServiceOptions options = {});
  ~DeformService();
  DeformService(const DeformService&) = delete;
  DeformService& operator=(const DeformService&) = delete;

  [[nodiscard]] unsigned short port() const;
  DeformSession& session();

  /// Serves on the calling thread until stop().
  void run();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flipfree
