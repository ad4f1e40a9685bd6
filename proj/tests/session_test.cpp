#include "fixtures.hpp"
#include "flipfree/energies.hpp"
#include "flipfree/protocol.hpp"
#include "flipfree/session.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace flipfree {
namespace {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

struct Recorded {
  SessionEvent event;
  Clock::time_point at;
};

// Thread-safe event log fed by the session sink.
class Recorder {
 public:
  DeformSession::Sink sink() {
    return [this](const SessionEvent& e) {
      {
        std::lock_guard<std::mutex> lock(mutex_);
        events_.push_back({e, Clock::now()});
      }
      cv_.notify_all();
    };
  }

  // Waits until pred holds on some event at index >= from; returns its index.
  template <typename Pred>
  std::size_t wait_for(Pred pred, std::size_t from = 0, std::chrono::seconds timeout = 30s) {
    std::unique_lock<std::mutex> lock(mutex_);
    std::size_t found = SIZE_MAX;
    cv_.wait_for(lock, timeout, [&] {
      for (std::size_t i = from; i < events_.size(); ++i)
        if (pred(events_[i].event)) {
          found = i;
          return true;
        }
      return false;
    });
    return found;
  }

  std::vector<Recorded> snapshot() {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_;
  }

  std::size_t size() {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_.size();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Recorded> events_;
};

bool is_final(const SessionEvent& e) {
  const auto* u = std::get_if<SessionUpdate>(&e);
  return u && u->final;
}

bool is_state(const SessionEvent& e, SessionState s) {
  const auto* st = std::get_if<SessionStatus>(&e);
  return st && st->state == s;
}

HandleConstraints bar_handles(const Mesh& mesh, double lift) {
  std::vector<Handle> h;
  const double x_max = mesh.vertices.col(0).maxCoeff();
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Eigen::Vector2d p = mesh.vertices.row(v).transpose();
    if (p.x() == 0.0) h.push_back({v, p});
    if (p.x() == x_max) h.push_back({v, p + Eigen::Vector2d(0.0, lift)});
  }
  return HandleConstraints(h);
}

TEST(Session, StartsIdleWithRestPositions) {
  const Mesh mesh = fixtures::bar();
  DeformSession session(mesh, SolverConfig::deformation_preset());
  const auto [status, update] = session.attach(nullptr);
  EXPECT_EQ(status.state, SessionState::kIdle);
  EXPECT_EQ(update.iter, 0);
  EXPECT_EQ((update.positions - mesh.vertices).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(session.state(), SessionState::kIdle);
}

TEST(Session, RejectsNonPlanarMeshes) {
  EXPECT_THROW(DeformSession(fixtures::hemisphere(3, 8), SolverConfig{}), InvalidInput);
  EXPECT_THROW(DeformSession(fixtures::cube_tets(1), SolverConfig{}), InvalidInput);
}

TEST(Session, PinAtRestConvergesToRest) {
  const Mesh mesh = fixtures::bar();
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset());
  session.attach(rec.sink());
  session.set_constraints(HandleConstraints({{0, mesh.vertices.row(0).transpose()}}));
  const std::size_t i = rec.wait_for(is_final);
  ASSERT_NE(i, SIZE_MAX);
  const SessionUpdate u = std::get<SessionUpdate>(rec.snapshot()[i].event);
  EXPECT_LE((u.positions - mesh.vertices).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(u.flips, 0);
  EXPECT_NE(rec.wait_for([](const SessionEvent& e) { return is_state(e, SessionState::kConverged); }), SIZE_MAX);
}

TEST(Session, AckKindsFollowTheVertexSet) {
  const Mesh mesh = fixtures::bar();
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset());
  session.attach(rec.sink());
  EXPECT_EQ(session.set_constraints(bar_handles(mesh, 0.0)), "refactorized");
  ASSERT_NE(rec.wait_for(is_final), SIZE_MAX);
  const int analyses = session.analyses();

  std::size_t mark = rec.size();
  EXPECT_EQ(session.set_constraints(bar_handles(mesh, 0.5)), "rhs-only");
  ASSERT_NE(rec.wait_for(is_final, mark), SIZE_MAX);
  EXPECT_EQ(session.analyses(), analyses);

  std::vector<Handle> more = bar_handles(mesh, 0.5).handles();
  more.push_back({13, mesh.vertices.row(13).transpose()});
  mark = rec.size();
  EXPECT_EQ(session.set_constraints(HandleConstraints(more)), "refactorized");
  ASSERT_NE(rec.wait_for(is_final, mark), SIZE_MAX);
  EXPECT_EQ(session.analyses(), analyses + 1);

  // The ack also travels through the sink.
  bool saw_rhs = false;
  for (const Recorded& r : rec.snapshot())
    if (const auto* s = std::get_if<SessionStatus>(&r.event))
      saw_rhs = saw_rhs || (s->request == "set_constraints" && s->ack == "rhs-only");
  EXPECT_TRUE(saw_rhs);
}

TEST(Session, InvalidEditsThrowAndLeaveStateAlone) {
  const Mesh mesh = fixtures::bar();
  DeformSession session(mesh, SolverConfig::deformation_preset());
  EXPECT_THROW(session.set_constraints(HandleConstraints{}), InvalidInput);
  EXPECT_THROW(session.set_constraints(HandleConstraints({{1, Eigen::Vector2d(0, 0)}, {1, Eigen::Vector2d(1, 0)}})),
               InvalidInput);
  EXPECT_THROW(session.set_constraints(HandleConstraints({{999, Eigen::Vector2d(0, 0)}})), InvalidInput);
  EXPECT_THROW(session.set_constraints(HandleConstraints({{1, Eigen::Vector3d(0, 0, 0)}})), InvalidInput);
  EXPECT_THROW(session.set_energy(EnergyKind::kArap), InvalidInput);
  EXPECT_EQ(session.state(), SessionState::kIdle);
}

// Every update emitted after an ack must already reflect that edit: pinned
// rows are written exactly by the global step.
TEST(Session, NoUpdateCarriesAStaleConstraintSet) {
  const Mesh mesh = fixtures::bar();
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset(), 0ms);
  session.attach(rec.sink());
  std::vector<std::pair<std::size_t, double>> edits;  // (event index after ack, lift)
  for (int k = 0; k < 40; ++k) {
    const double lift = 0.02 * k;
    session.set_constraints(bar_handles(mesh, lift));
    std::this_thread::sleep_for(1ms);
  }
  ASSERT_NE(rec.wait_for(is_final), SIZE_MAX);
  session.attach(nullptr);
  const std::vector<Recorded> events = rec.snapshot();
  int probe = -1;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.vertices(v, 0) == mesh.vertices.col(0).maxCoeff()) probe = v;
  double current_lift = -1.0;
  int acks = 0;
  int checked = 0;
  for (const Recorded& r : events) {
    if (const auto* s = std::get_if<SessionStatus>(&r.event); s && s->request == "set_constraints") {
      current_lift = 0.02 * acks++;
    } else if (const auto* u = std::get_if<SessionUpdate>(&r.event); u && current_lift >= 0.0) {
      EXPECT_EQ(u->positions(probe, 1), mesh.vertices(probe, 1) + current_lift) << "iter " << u->iter;
      ++checked;
    }
  }
  EXPECT_EQ(acks, 40);
  EXPECT_GT(checked, 0);
}

TEST(Session, UpdatesAreThrottledAndMonotone) {
  const Mesh mesh = fixtures::grid(12, 1.0);
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset(), 33ms);
  session.attach(rec.sink());
  std::vector<Handle> h;
  for (int v : boundary_vertices(mesh)) {
    Eigen::Vector2d p = mesh.vertices.row(v).transpose();
    h.push_back({v, Eigen::Vector2d(p.x() * (1.0 + 0.3 * p.y()), p.y())});
  }
  session.set_constraints(HandleConstraints(h));
  ASSERT_NE(rec.wait_for(is_final), SIZE_MAX);
  const std::vector<Recorded> events = rec.snapshot();
  long last_iter = -1;
  std::optional<Clock::time_point> last_time;
  int updates = 0;
  for (const Recorded& r : events) {
    const auto* u = std::get_if<SessionUpdate>(&r.event);
    if (!u) continue;
    ++updates;
    EXPECT_GT(u->iter, last_iter);
    last_iter = u->iter;
    if (last_time && !u->final) EXPECT_GE(r.at - *last_time, 32ms);
    last_time = r.at;
  }
  EXPECT_GE(updates, 1);
}

TEST(Session, PauseHoldsStateAndResumeContinues) {
  const Mesh mesh = fixtures::grid(12, 1.0);
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset(), 0ms);
  session.attach(rec.sink());
  std::vector<Handle> h;
  for (int v : boundary_vertices(mesh)) {
    Eigen::Vector2d p = mesh.vertices.row(v).transpose();
    h.push_back({v, Eigen::Vector2d(p.x() * (1.0 + 0.3 * p.y()), p.y())});
  }
  session.set_constraints(HandleConstraints(h));
  std::this_thread::sleep_for(5ms);
  session.pause();
  EXPECT_EQ(session.state(), SessionState::kPaused);
  std::this_thread::sleep_for(20ms);  // let an in-flight sweep finish
  const long held = session.sweeps();
  std::this_thread::sleep_for(50ms);
  EXPECT_EQ(session.sweeps(), held);
  const std::size_t mark = rec.size();
  session.resume();
  ASSERT_NE(rec.wait_for(is_final, mark), SIZE_MAX);
  EXPECT_GT(session.sweeps(), held);
}

TEST(Session, ResetReturnsToRestAndIdle) {
  const Mesh mesh = fixtures::bar();
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset());
  session.attach(rec.sink());
  session.set_constraints(bar_handles(mesh, 0.8));
  ASSERT_NE(rec.wait_for(is_final), SIZE_MAX);
  const long before = std::get<SessionUpdate>(rec.snapshot()[rec.wait_for(is_final)].event).iter;
  const std::size_t mark = rec.size();
  session.reset();
  const std::size_t i = rec.wait_for([](const SessionEvent& e) { return std::holds_alternative<SessionUpdate>(e); }, mark);
  ASSERT_NE(i, SIZE_MAX);
  const SessionUpdate u = std::get<SessionUpdate>(rec.snapshot()[i].event);
  EXPECT_EQ((u.positions - mesh.vertices).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(u.iter, before);
  EXPECT_EQ(session.state(), SessionState::kIdle);
  // After a reset any edit needs a fresh factorization.
  EXPECT_EQ(session.set_constraints(bar_handles(mesh, 0.0)), "refactorized");
}

TEST(Session, SetEnergySwitchesAndKeepsRunning) {
  const Mesh mesh = fixtures::bar();
  Recorder rec;
  DeformSession session(mesh, SolverConfig::deformation_preset());
  session.attach(rec.sink());
  session.set_constraints(bar_handles(mesh, 0.4));
  ASSERT_NE(rec.wait_for(is_final), SIZE_MAX);
  const std::size_t mark = rec.size();
  session.set_energy(EnergyKind::kSymmetricGradient);
  const std::size_t i = rec.wait_for(is_final, mark);
  ASSERT_NE(i, SIZE_MAX);
  const SessionUpdate u = std::get<SessionUpdate>(rec.snapshot()[i].event);
  EXPECT_EQ(u.flips, 0);
  const Eigen::MatrixXd& w = u.positions;
  const JacobianOperator g = build_gradient_operator(mesh);
  EXPECT_NEAR(u.energy, evaluate(mesh, g, w, EnergyKind::kSymmetricGradient).total, 1e-9 * std::abs(u.energy));
}

// ---------------------------------------------------------------- protocol

TEST(Protocol, BinaryArraysRoundTripBitExactly) {
  Eigen::MatrixXd rows(3, 2);
  rows << 0.1, -2.5, 1e-300, 3.0, -0.0, 7.25;
  const std::string frame = encode_doubles_binary(rows);
  ASSERT_EQ(frame.size(), 8u + 6u * 8u);
  std::uint64_t count = 0;
  std::memcpy(&count, frame.data(), 8);
  EXPECT_EQ(count, 6u);
  EXPECT_EQ(static_cast<unsigned char>(frame[0]), 6u);  // little endian
  const std::vector<double> back = decode_doubles_binary(frame);
  ASSERT_EQ(back.size(), 6u);
  for (int k = 0; k < 6; ++k) {
    const double expected = rows(k / 2, k % 2);
    EXPECT_EQ(std::memcmp(&back[k], &expected, sizeof(double)), 0);
  }
  EXPECT_THROW(decode_doubles_binary(frame.substr(0, 12)), InvalidInput);
  EXPECT_THROW(decode_doubles_binary("abc"), InvalidInput);
}

TEST(Protocol, MeshMessageSwitchesToBinaryAboveThreshold) {
  const Mesh mesh = fixtures::bar();
  const OutgoingMessage text = encode_mesh(mesh, 10000);
  const nlohmann::json j = nlohmann::json::parse(text.text);
  EXPECT_EQ(j["type"], "mesh");
  EXPECT_EQ(j["num_vertices"], mesh.num_vertices());
  EXPECT_EQ(j["faces"].size(), 3u * mesh.num_elements());
  EXPECT_EQ(j["vertices"].size(), 2u * mesh.num_vertices());
  EXPECT_FALSE(text.binary);

  const OutgoingMessage bin = encode_mesh(mesh, 10);
  const nlohmann::json jb = nlohmann::json::parse(bin.text);
  EXPECT_TRUE(jb["binary"].get<bool>());
  EXPECT_FALSE(jb.contains("vertices"));
  ASSERT_TRUE(bin.binary);
  const std::vector<double> v = decode_doubles_binary(*bin.binary);
  ASSERT_EQ(v.size(), 2u * mesh.num_vertices());
  EXPECT_EQ(v[2], mesh.vertices(1, 0));
  EXPECT_EQ(v[3], mesh.vertices(1, 1));
}

TEST(Protocol, UpdateAndStatusEncoding) {
  SessionUpdate u;
  u.iter = 7;
  u.positions = Eigen::MatrixXd::Ones(2, 2);
  u.flips = 1;
  u.final = true;
  const OutgoingMessage m = encode_event(u, 10000);
  EXPECT_TRUE(m.is_update);
  const nlohmann::json j = nlohmann::json::parse(m.text);
  EXPECT_EQ(j["type"], "update");
  EXPECT_EQ(j["iter"], 7);
  EXPECT_EQ(j["positions"].size(), 4u);
  for (const char* key : {"energy", "flips", "e_prim", "e_dual", "final"}) EXPECT_TRUE(j.contains(key)) << key;

  const nlohmann::json s =
      nlohmann::json::parse(encode_event(SessionStatus{SessionState::kRunning, "set_constraints", "rhs-only"}, 1).text);
  EXPECT_EQ(s["type"], "status");
  EXPECT_EQ(s["state"], "running");
  EXPECT_EQ(s["ack"], "rhs-only");
  const nlohmann::json e = nlohmann::json::parse(encode_event(SessionError{"boom"}, 1).text);
  EXPECT_EQ(e["type"], "error");
  EXPECT_EQ(e["message"], "boom");
}

TEST(Protocol, DispatchRejectsMalformedMessages) {
  DeformSession session(fixtures::bar(), SolverConfig::deformation_preset());
  EXPECT_TRUE(dispatch_client_message(session, "not json"));
  EXPECT_TRUE(dispatch_client_message(session, "[1,2]"));
  EXPECT_TRUE(dispatch_client_message(session, R"({"type": 3})"));
  EXPECT_TRUE(dispatch_client_message(session, R"({"type": "warp"})"));
  EXPECT_TRUE(dispatch_client_message(session, R"({"type": "set_constraints"})"));
  EXPECT_TRUE(dispatch_client_message(session, R"({"type": "set_constraints", "handles": []})"));
  const auto dup = dispatch_client_message(
      session, R"({"type":"set_constraints","handles":[{"vertex":1,"position":[0,0]},{"vertex":1,"position":[1,0]}]})");
  ASSERT_TRUE(dup);
  EXPECT_NE(dup->find("duplicate"), std::string::npos) << *dup;
  EXPECT_TRUE(dispatch_client_message(session, R"({"type":"set_energy","kind":"arap"})"));
  EXPECT_TRUE(dispatch_client_message(session, R"({"type":"set_energy"})"));
  EXPECT_FALSE(dispatch_client_message(session, R"({"type":"pause"})"));
  EXPECT_EQ(session.state(), SessionState::kPaused);
  EXPECT_FALSE(dispatch_client_message(session, R"({"type":"set_energy","kind":"sg"})"));
}

}  // namespace
}  // namespace flipfree
