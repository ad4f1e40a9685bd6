#pragma once

// Interactive deformation session: a solver worker thread steered by
// constraint edits, independent of any transport.

#include "flipfree/admm.hpp"
#include "flipfree/mesh.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>

namespace flipfree {

enum class SessionState { kIdle, kRunning, kPaused, kConverged, kStalled };

std::string session_state_name(SessionState s);

struct SessionUpdate {
  long iter = 0;  // session-wide, never decreases
  Eigen::MatrixXd positions;
  double energy = 0.0;
  int flips = 0;
  double e_prim = 0.0;
  double e_dual = 0.0;
  bool final = false;  // sent on convergence regardless of throttling
};

struct SessionStatus {
  SessionState state = SessionState::kIdle;
  std::string request;  // client message this acknowledges, empty if unsolicited
  std::string ack;      // "rhs-only" / "refactorized" for constraint edits
};

struct SessionError {
  std::string message;
};

using SessionEvent = std::variant<SessionUpdate, SessionStatus, SessionError>;

/// Owns one planar solver and its worker. Client requests return at once;
/// they are queued and applied by the worker at the next iteration boundary.
/// Events reach the sink in the order they are produced; an acknowledgement
/// is always delivered before any update that reflects the request.
class DeformSession {
 public:
  using Sink = std::function<void(const SessionEvent&)>;

  /// Planar triangle meshes only. Starts idle at the rest positions.
  DeformSession(Mesh mesh, SolverConfig config, std::chrono::milliseconds throttle = std::chrono::milliseconds(33));
  ~DeformSession();
  DeformSession(const DeformSession&) = delete;
  DeformSession& operator=(const DeformSession&) = delete;

  [[nodiscard]] const Mesh& mesh() const { return mesh_; }

  /// Replaces the sink (nullptr detaches). Returns the current status and the
  /// last published update, captured atomically with the swap.
  std::pair<SessionStatus, SessionUpdate> attach(Sink sink);

  /// Throws InvalidInput on an empty or invalid list. Returns the ack.
  std::string set_constraints(HandleConstraints handles);
  void pause();
  void resume();
  /// Back to rest positions with no handles.
  void reset();
  /// Throws InvalidInput for energies without a closed-form P-step.
  void set_energy(EnergyKind kind);

  [[nodiscard]] SessionState state() const;
  /// Sweeps taken by the worker so far, across resets.
  [[nodiscard]] long sweeps() const;
  /// Totals over every solver the session has run.
  [[nodiscard]] int factorizations() const;
  [[nodiscard]] int analyses() const;

 private:
  struct ResetOp {};
  struct EnergyOp {
    EnergyKind kind;
  };
  struct ConstraintOp {
    HandleConstraints handles;
  };
  using Op = std::variant<ResetOp, EnergyOp, ConstraintOp>;

  void worker();
  void apply(const Op& op);
  void rebuild(const Eigen::MatrixXd& w0, const HandleConstraints& handles);
  SessionUpdate snapshot(const DiagnosticsRecord& r, bool final);
  void emit(const SessionEvent& event);
  void ack(const std::string& request, const std::string& ack = {});

  const Mesh mesh_;
  SolverConfig config_;
  const std::chrono::milliseconds throttle_;

  // Owned by the worker thread except during construction.
  std::unique_ptr<AdmmSolver<2>> solver_;

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<Op> ops_;
  SessionState state_ = SessionState::kIdle;
  HandleConstraints latest_handles_;  // as requested, including queued edits
  Sink sink_;
  SessionUpdate last_update_;
  long iter_ = 0;
  long sweeps_ = 0;
  bool force_refactor_ = true;  // next edit lands on a solver without a factorization
  int factorizations_ = 0;
  int analyses_ = 0;
  int retired_factorizations_ = 0;  // from solvers replaced by reset / set_energy
  int retired_analyses_ = 0;
  std::chrono::steady_clock::time_point last_publish_{};
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace flipfree
