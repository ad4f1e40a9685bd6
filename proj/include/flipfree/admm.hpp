#pragma once

#include "flipfree/energies.hpp"
#include "flipfree/jacobian.hpp"
#include "flipfree/mesh.hpp"
#include "flipfree/types.hpp"

#include <Eigen/SparseCholesky>

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace flipfree {

enum class TerminationMode { kDefault, kFlipFreeOnly, kTargetEnergy };

enum class SolveStatus { kConverged, kMaxIter, kStalled };

std::string status_name(SolveStatus status);
std::string termination_name(TerminationMode mode);

struct SolverConfig {
  EnergyKind energy = EnergyKind::kSymmetricGradient;
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  int max_iter = 10000;
  double rho = 5.0;
  double gamma = 1.0;
  double eps_slack = 0.0;
  bool proximal = true;
  bool rescaling = true;
  TerminationMode termination = TerminationMode::kDefault;
  double target_energy = 0.0;

  // Rescale at k = 1..initial_rescales, then once k - k_last reaches
  // schedule_base * schedule_growth^p.
  int initial_rescales = 5;
  double schedule_base = 5.0;
  double schedule_growth = 1.5;

  // Give up while flips remain when, for stall_window iterations, neither
  // error improved by stall_rel (relative), or the flip count found no new
  // minimum and max |grad f(P_i)| grew past its value at the last minimum.
  int stall_window = 200;
  double stall_rel = 1e-12;

  /// Tolerances for handle-driven deformation.
  static SolverConfig deformation_preset();
};

/// One row of the iteration log.
struct DiagnosticsRecord {
  int iter = 0;
  double e_prim = 0.0;
  double e_dual = 0.0;
  double max_e_prim = 0.0;
  double max_e_dual = 0.0;
  double energy = 0.0;
  int flips = 0;
  double phi = 0.0;
  double max_grad_norm = 0.0;  // max_i |grad f(P_i)|
  double lambda_ratio = 0.0;   // max over elements, on mu-multiplied multipliers
  double mu_min = 0.0;         // smallest mu_i
  double mu_max = 0.0;         // largest mu_i
  double wall_ms = 0.0;
  double prim_threshold = 0.0;
  double dual_threshold = 0.0;
  bool rescaled = false;
};

inline constexpr const char* kLogHeader =
    "iter,e_prim,e_dual,energy,flips,phi,max_grad_norm,lambda_ratio,mu_min,mu_max,wall_ms";

void write_log_row(std::ostream& out, const DiagnosticsRecord& r);

struct ErrorTotals {
  double e_prim = 0.0;
  double e_dual = 0.0;
  std::vector<double> prim;  // per element
  std::vector<double> dual;
};

struct ConvergenceConstants {
  Eigen::VectorXd b;
  Eigen::VectorXd f;
  Eigen::VectorXd c_l;
  Eigen::VectorXd c_lg;
  Eigen::VectorXd mu_min;
  Eigen::VectorXd h;
};

/// Positive root of x^2 + b x - 1 = 0.
double lipschitz_c_l(double b);
/// Positive root of x^4 + b x^3 - 1 = 0.
double lipschitz_c_lg(double b);

struct ElementConstants {
  double b = 0.0;
  double f = 0.0;
  double c_l = 0.0;
  double c_lg = 0.0;
  double mu_min = 0.0;
};

/// Constants for one element from the norm of grad f(P_i); F^2 is capped at
/// eps_m^(-1/4). `d` is the element dimension.
ElementConstants element_constants(EnergyKind kind, int d, double grad_norm, double w,
                                   double gamma, double eps_slack);

/// Smallest penalty satisfying mu^2 + (w - 2 eps) mu = 4 gamma w^2 F^2.
double penalty_floor(double w, double f, double gamma, double eps_slack);

/// h_i for a given penalty.
double proximal_weight(double w, double b, double mu, double gamma, double eps_slack);

/// True when a rescale event is due at iteration k (k >= 1), given p past
/// events, the last event at k_last.
bool rescale_schedule(int k, int p, int k_last, const SolverConfig& config = {});

struct RescaleOutcome {
  double mu = 0.0;
  double lambda_scale = 1.0;  // multiply Lambda_i by this
  bool clamped = false;
};

/// Per-element penalty update: x rho/2 when e_prim > rho e_dual, / rho/2 when
/// e_dual > rho e_prim, then clamped to at least mu_floor. Lambda is scaled
/// so mu * Lambda is preserved.
RescaleOutcome rescale_rule(double mu, double e_prim, double e_dual, double rho, double mu_floor);

template <int D>
struct AdmmState {
  Eigen::MatrixXd w;
  MatField<D> jac;       // G W at the current iterate
  MatField<D> jac_prev;  // G W at the previous iterate
  MatField<D> u;
  MatField<D> p;
  MatField<D> lambda;  // scaled multipliers
  Eigen::VectorXd mu;
  Eigen::VectorXd h;
  Eigen::VectorXd b;  // gradient bounds behind the current mu_min
  Eigen::VectorXd mu_min;
  int k = 0;
  int events = 0;
  int k_last = 0;
  double lambda_ratio = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::kMaxIter;
  Eigen::MatrixXd w;
  int iterations = 0;
  std::vector<DiagnosticsRecord> history;
  double wall_ms = 0.0;
};

/// Three-block splitting solver over W, U in SO(d), P in SPD(d) and the
/// scaled multipliers. One thread drives it; post_constraints may be called
/// from any thread and takes effect at the next iteration boundary.
template <int D>
class AdmmSolver {
 public:
  AdmmSolver(const Mesh& mesh, SolverConfig config);

  [[nodiscard]] const Mesh& mesh() const { return mesh_; }
  [[nodiscard]] const JacobianOperator& gradient() const { return g_; }
  [[nodiscard]] const SolverConfig& config() const { return config_; }
  [[nodiscard]] const AdmmState<D>& state() const { return state_; }
  [[nodiscard]] const HandleConstraints& constraints() const { return constraints_; }

  /// Polar initialization from w0, Lambda = 0, mu_i = max(mu_min_i, w_i).
  /// With no constraints vertex 0 is pinned at its w0 position.
  void initialize(const Eigen::MatrixXd& w0, const HandleConstraints& constraints);

  /// Queues a new constraint set; applied at the start of the next iterate.
  void post_constraints(HandleConstraints constraints);

  /// Replaces mu and h (and drops the factorization).
  void set_penalties(const Eigen::VectorXd& mu, const Eigen::VectorXd& h);

  /// Solves the global step for the current U, P, Lambda.
  Eigen::MatrixXd w_step();

  /// One sweep W, U, P, Lambda.
  void iterate();

  [[nodiscard]] ErrorTotals compute_errors() const;
  [[nodiscard]] double augmented_lagrangian() const;
  [[nodiscard]] ConvergenceConstants convergence_constants() const;
  [[nodiscard]] DiagnosticsRecord diagnostics(const ErrorTotals& errors) const;
  [[nodiscard]] bool check_termination(const DiagnosticsRecord& record) const;

  /// Applies the rescale rule to every element and recomputes mu_min, B, h.
  /// Returns whether any penalty changed.
  bool rescale(const ErrorTotals& errors);

  /// iterate followed by finish_iteration.
  std::optional<SolveStatus> step(DiagnosticsRecord* record = nullptr);

  /// Diagnostics, termination and scheduled rescaling for the sweep just
  /// taken. Returns the terminal status once reached.
  std::optional<SolveStatus> finish_iteration(DiagnosticsRecord* record = nullptr);

  /// Runs step until a terminal status or max_iter; writes CSV rows to `log`.
  SolveResult solve(std::ostream* log = nullptr,
                    const std::function<void(const DiagnosticsRecord&)>& on_iter = {});

  /// Number of numeric factorizations so far.
  [[nodiscard]] int factorizations() const { return factorizations_; }
  /// Number of symbolic analyses so far.
  [[nodiscard]] int analyses() const { return analyses_; }

 private:
  void apply_constraints(HandleConstraints constraints);
  void consume_mailbox();
  void refactorize();
  void update_constants(bool reset_penalties);
  void check_components() const;

  const Mesh& mesh_;
  JacobianOperator g_;
  SolverConfig config_;
  AdmmState<D> state_;
  HandleConstraints constraints_;

  std::vector<bool> pinned_;
  std::vector<int> free_slot_;
  int num_free_ = 0;
  Eigen::MatrixXd pinned_values_;
  SparseMatrix l_ff_;
  SparseMatrix l_fp_;  // free rows, pinned columns (dense-indexed by vertex)
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  bool pattern_ready_ = false;
  bool factor_ready_ = false;
  int factorizations_ = 0;
  int analyses_ = 0;

  std::mutex mailbox_mutex_;
  std::optional<HandleConstraints> mailbox_;

  double best_prim_ = 0.0;
  double best_dual_ = 0.0;
  int last_improvement_ = 0;
  int best_flips_ = 0;
  int last_flip_improvement_ = 0;
  double grad_at_best_flips_ = 0.0;
  std::chrono::steady_clock::time_point start_;
};

/// Dimension-dispatching convenience wrapper around AdmmSolver::solve.
SolveResult solve(const Mesh& mesh, const Eigen::MatrixXd& w0, const HandleConstraints& constraints,
                  const SolverConfig& config, std::ostream* log = nullptr);

}  // namespace flipfree
