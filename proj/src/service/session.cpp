#include "flipfree/session.hpp"

#include "flipfree/energies.hpp"

namespace flipfree {

std::string session_state_name(SessionState s) {
  switch (s) {
    case SessionState::kIdle:
      return "idle";
    case SessionState::kRunning:
      return "running";
    case SessionState::kPaused:
      return "paused";
    case SessionState::kConverged:
      return "converged";
    case SessionState::kStalled:
      return "stalled";
  }
  return "unknown";
}

DeformSession::DeformSession(Mesh mesh, SolverConfig config, std::chrono::milliseconds throttle)
    : mesh_(std::move(mesh)), config_(config), throttle_(throttle) {
  if (mesh_.dim != 2 || mesh_.embed_dim != 2) {
    throw InvalidInput("interactive sessions need a planar triangle mesh");
  }
  rebuild(mesh_.vertices, {});
  last_update_.positions = mesh_.vertices;
  last_update_.flips = 0;
  last_update_.energy = evaluate(mesh_, solver_->gradient(), mesh_.vertices, config_.energy).total;
  thread_ = std::thread([this] { worker(); });
}

DeformSession::~DeformSession() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
    sink_ = nullptr;
  }
  wake_.notify_all();
  thread_.join();
}

std::pair<SessionStatus, SessionUpdate> DeformSession::attach(Sink sink) {
  std::lock_guard<std::mutex> lock(mutex_);
  sink_ = std::move(sink);
  return {SessionStatus{state_, "", ""}, last_update_};
}

void DeformSession::emit(const SessionEvent& event) {
  if (sink_) sink_(event);
}

void DeformSession::ack(const std::string& request, const std::string& ack_kind) {
  emit(SessionStatus{state_, request, ack_kind});
}

std::string DeformSession::set_constraints(HandleConstraints handles) {
  if (handles.empty()) throw InvalidInput("set_constraints needs at least one handle");
  handles.validate(mesh_.num_vertices(), 2);
  std::string kind;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    // With no handles the solver holds vertex 0 as its anchor.
    const std::vector<int> current =
        latest_handles_.empty() ? std::vector<int>{0} : latest_handles_.vertex_ids();
    kind = !force_refactor_ && handles.vertex_ids() == current ? "rhs-only" : "refactorized";
    force_refactor_ = false;
    latest_handles_ = handles;
    ops_.push_back(ConstraintOp{std::move(handles)});
    if (state_ != SessionState::kPaused) state_ = SessionState::kRunning;
    ack("set_constraints", kind);
  }
  wake_.notify_all();
  return kind;
}

void DeformSession::pause() {
  std::lock_guard<std::mutex> lock(mutex_);
  state_ = SessionState::kPaused;
  ack("pause");
}

void DeformSession::resume() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (state_ == SessionState::kPaused) {
      state_ = latest_handles_.empty() ? SessionState::kIdle : SessionState::kRunning;
    }
    ack("resume");
  }
  wake_.notify_all();
}

void DeformSession::reset() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ops_.clear();
    ops_.push_back(ResetOp{});
    latest_handles_ = HandleConstraints{};
    force_refactor_ = true;
    state_ = SessionState::kIdle;
    ack("reset");
  }
  wake_.notify_all();
}

void DeformSession::set_energy(EnergyKind kind) {
  if (kind == EnergyKind::kArap) throw InvalidInput("arap has no closed-form P-step; use sg or sd");
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ops_.push_back(EnergyOp{kind});
    force_refactor_ = true;
    if (state_ != SessionState::kPaused) {
      state_ = latest_handles_.empty() ? SessionState::kIdle : SessionState::kRunning;
    }
    ack("set_energy");
  }
  wake_.notify_all();
}

SessionState DeformSession::state() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return state_;
}

long DeformSession::sweeps() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return sweeps_;
}

int DeformSession::factorizations() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return factorizations_;
}

int DeformSession::analyses() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return analyses_;
}

void DeformSession::rebuild(const Eigen::MatrixXd& w0, const HandleConstraints& handles) {
  if (solver_) {
    retired_factorizations_ += solver_->factorizations();
    retired_analyses_ += solver_->analyses();
  }
  solver_ = std::make_unique<AdmmSolver<2>>(mesh_, config_);
  solver_->initialize(w0, handles);
}

SessionUpdate DeformSession::snapshot(const DiagnosticsRecord& r, bool final) {
  SessionUpdate u;
  u.iter = iter_;
  u.positions = solver_->state().w;
  u.energy = r.energy;
  u.flips = r.flips;
  u.e_prim = r.e_prim;
  u.e_dual = r.e_dual;
  u.final = final;
  return u;
}

// Runs with the lock held, on the worker thread.
void DeformSession::apply(const Op& op) {
  if (std::holds_alternative<ResetOp>(op)) {
    rebuild(mesh_.vertices, {});
    SessionUpdate u;
    u.iter = ++iter_;
    u.positions = mesh_.vertices;
    u.energy = evaluate(mesh_, solver_->gradient(), mesh_.vertices, config_.energy).total;
    last_update_ = u;
    emit(u);
  } else if (const auto* e = std::get_if<EnergyOp>(&op)) {
    config_.energy = e->kind;
    const Eigen::MatrixXd w = solver_->state().w;
    rebuild(w, latest_handles_.empty() ? HandleConstraints{} : solver_->constraints());
  } else {
    solver_->post_constraints(std::get<ConstraintOp>(op).handles);
  }
}

void DeformSession::worker() {
  std::unique_lock<std::mutex> lock(mutex_);
  while (true) {
    wake_.wait(lock, [&] { return stop_ || !ops_.empty() || state_ == SessionState::kRunning; });
    if (stop_) return;
    try {
      while (!ops_.empty()) {
        const Op op = std::move(ops_.front());
        ops_.pop_front();
        apply(op);
      }
      if (state_ != SessionState::kRunning) continue;

      lock.unlock();
      solver_->iterate();
      DiagnosticsRecord r;
      const std::optional<SolveStatus> status = solver_->finish_iteration(&r);
      lock.lock();

      ++sweeps_;
      ++iter_;
      factorizations_ = retired_factorizations_ + solver_->factorizations();
      analyses_ = retired_analyses_ + solver_->analyses();
      // A queued request supersedes this iterate; its ack is already out.
      if (!ops_.empty() || stop_) continue;

      const auto now = std::chrono::steady_clock::now();
      if (status || now - last_publish_ >= throttle_) {
        last_update_ = snapshot(r, status == SolveStatus::kConverged);
        last_publish_ = now;
        emit(last_update_);
      }
      if (status == SolveStatus::kConverged) {
        state_ = SessionState::kConverged;
        ack("");
      } else if (status == SolveStatus::kStalled) {
        state_ = SessionState::kStalled;
        ack("");
      }
    } catch (const std::exception& e) {
      if (!lock.owns_lock()) lock.lock();
      state_ = SessionState::kIdle;
      emit(SessionError{e.what()});
      ack("");
    }
  }
}

}  // namespace flipfree
