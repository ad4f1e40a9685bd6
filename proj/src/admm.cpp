#include "flipfree/admm.hpp"

#include "flipfree/local_steps.hpp"
#include "flipfree/smallmat.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

namespace flipfree {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string status_name(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIter:
      return "max-iter";
    case SolveStatus::kStalled:
      return "stalled";
  }
  return "unknown";
}

std::string termination_name(TerminationMode mode) {
  switch (mode) {
    case TerminationMode::kDefault:
      return "default";
    case TerminationMode::kFlipFreeOnly:
      return "flip-free-only";
    case TerminationMode::kTargetEnergy:
      return "target-energy";
  }
  return "unknown";
}

SolverConfig SolverConfig::deformation_preset() {
  SolverConfig c;
  c.energy = EnergyKind::kSymmetricDirichlet;
  c.eps_abs = 5e-10;
  c.eps_rel = 5e-9;
  return c;
}

void write_log_row(std::ostream& out, const DiagnosticsRecord& r) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17) << r.iter << ',' << r.e_prim << ',' << r.e_dual << ',' << r.energy << ','
      << r.flips << ',' << r.phi << ',' << r.max_grad_norm << ',' << r.lambda_ratio << ',' << r.mu_min
      << ',' << r.mu_max << ',' << r.wall_ms << '\n';
  out.flags(flags);
  out.precision(prec);
}

double lipschitz_c_l(double b) { return 2.0 / (b + std::sqrt(4.0 + b * b)); }

double lipschitz_c_lg(double b) { return quartic_unique_positive(1.0, b, -1.0); }

ElementConstants element_constants(EnergyKind kind, int d, double grad_norm, double w, double gamma,
                                   double eps_slack) {
  ElementConstants c;
  c.b = std::sqrt(5.0 * (1.0 + grad_norm * grad_norm));
  c.c_l = lipschitz_c_l(c.b);
  c.c_lg = lipschitz_c_lg(c.b);
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  if (kind == EnergyKind::kSymmetricDirichlet) {
    c.f = 1.0 + 3.0 * sqrt_d / std::pow(c.c_lg, 4);
  } else {
    c.f = 1.0 + sqrt_d / (c.c_l * c.c_l);
  }
  // F^2 <= eps_m^(-1/4)
  c.f = std::min(c.f, std::pow(kMachineEps, -0.125));
  c.mu_min = penalty_floor(w, c.f, gamma, eps_slack);
  return c;
}

double penalty_floor(double w, double f, double gamma, double eps_slack) {
  const double a = w - 2.0 * eps_slack;
  return 0.5 * (-a + std::sqrt(a * a + 16.0 * gamma * w * w * f * f));
}

double proximal_weight(double w, double b, double mu, double gamma, double eps_slack) {
  return 4.0 * gamma * w * w * b * b / mu + 2.0 * eps_slack;
}

bool rescale_schedule(int k, int p, int k_last, const SolverConfig& config) {
  if (k < 1) return false;
  if (k <= config.initial_rescales) return true;
  return static_cast<double>(k - k_last) >= config.schedule_base * std::pow(config.schedule_growth, p);
}

RescaleOutcome rescale_rule(double mu, double e_prim, double e_dual, double rho, double mu_floor) {
  const double factor = 0.5 * rho;
  double next = mu;
  if (e_prim > rho * e_dual) {
    next = mu * factor;
  } else if (e_dual > rho * e_prim) {
    next = mu / factor;
  }
  RescaleOutcome out;
  if (next < mu_floor) {
    next = mu_floor;
    out.clamped = true;
  }
  out.mu = next;
  out.lambda_scale = mu / next;
  return out;
}

template <int D>
AdmmSolver<D>::AdmmSolver(const Mesh& mesh, SolverConfig config)
    : mesh_(mesh), g_(build_gradient_operator(mesh)), config_(std::move(config)) {
  if (mesh.dim != D) throw InvalidInput("solver dimension does not match the mesh");
  if (config_.energy == EnergyKind::kArap) {
    throw InvalidInput("ARAP is evaluation-only and cannot be optimized");
  }
}

template <int D>
void AdmmSolver<D>::check_components() const {
  std::vector<int> component;
  const int count = connected_components(mesh_, component);
  std::vector<bool> anchored(count, false);
  for (int v = 0; v < mesh_.num_vertices(); ++v)
    if (pinned_[v]) anchored[component[v]] = true;
  for (int c = 0; c < count; ++c) {
    if (anchored[c]) continue;
    int sample = 0;
    while (component[sample] != c) ++sample;
    throw SolverError("connected component " + std::to_string(c) + " (containing vertex " +
                      std::to_string(sample) + ") has no pinned vertex; the global system is singular");
  }
}

template <int D>
void AdmmSolver<D>::apply_constraints(HandleConstraints constraints) {
  constraints.validate(mesh_.num_vertices(), D);
  if (constraints.empty()) {
    Handle anchor{0, state_.w.row(0).transpose()};
    constraints = HandleConstraints({anchor});
  }
  const bool same_set = pattern_ready_ && constraints.same_vertices(constraints_);
  constraints_ = std::move(constraints);
  pinned_values_ = Eigen::MatrixXd::Zero(mesh_.num_vertices(), D);
  for (const Handle& h : constraints_.handles()) pinned_values_.row(h.vertex) = h.position.transpose();
  if (same_set) return;

  const int n = mesh_.num_vertices();
  pinned_.assign(n, false);
  for (const Handle& h : constraints_.handles()) pinned_[h.vertex] = true;
  free_slot_.assign(n, -1);
  num_free_ = 0;
  for (int v = 0; v < n; ++v)
    if (!pinned_[v]) free_slot_[v] = num_free_++;
  check_components();
  pattern_ready_ = false;
  factor_ready_ = false;
}

template <int D>
void AdmmSolver<D>::refactorize() {
  const SparseMatrix l = g_.assemble_weighted_laplacian(state_.mu);
  std::vector<Eigen::Triplet<double>> ff;
  std::vector<Eigen::Triplet<double>> fp;
  for (int col = 0; col < l.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(l, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (pinned_[r]) continue;
      if (pinned_[col]) {
        fp.emplace_back(free_slot_[r], col, it.value());
      } else {
        ff.emplace_back(free_slot_[r], free_slot_[col], it.value());
      }
    }
  }
  l_ff_.resize(num_free_, num_free_);
  l_ff_.setFromTriplets(ff.begin(), ff.end());
  l_ff_.makeCompressed();
  l_fp_.resize(num_free_, mesh_.num_vertices());
  l_fp_.setFromTriplets(fp.begin(), fp.end());
  l_fp_.makeCompressed();
  if (num_free_ > 0) {
    if (!pattern_ready_) {
      ldlt_.analyzePattern(l_ff_);
      ++analyses_;
    }
    ldlt_.factorize(l_ff_);
    ++factorizations_;
    if (ldlt_.info() != Eigen::Success) {
      throw SolverError("factorization of the global system failed");
    }
  }
  pattern_ready_ = true;
  factor_ready_ = true;
}

template <int D>
void AdmmSolver<D>::update_constants(bool reset_penalties) {
  const int m = mesh_.num_elements();
  state_.b.resize(m);
  state_.mu_min.resize(m);
  if (reset_penalties) {
    state_.mu.resize(m);
    state_.h.resize(m);
  }
  for (int i = 0; i < m; ++i) {
    const double w = mesh_.measures(i);
    const double grad = energy_gradient<D>(config_.energy, state_.p[i]).norm();
    const ElementConstants c =
        element_constants(config_.energy, D, grad, w, config_.gamma, config_.eps_slack);
    state_.b(i) = c.b;
    state_.mu_min(i) = c.mu_min;
    if (reset_penalties) state_.mu(i) = std::max(c.mu_min, w);
  }
  for (int i = 0; i < m; ++i) {
    state_.h(i) = config_.proximal ? proximal_weight(mesh_.measures(i), state_.b(i), state_.mu(i),
                                                     config_.gamma, config_.eps_slack)
                                   : 0.0;
  }
}

template <int D>
void AdmmSolver<D>::initialize(const Eigen::MatrixXd& w0, const HandleConstraints& constraints) {
  if (w0.rows() != mesh_.num_vertices() || w0.cols() != D) {
    throw InvalidInput("initial map must be " + std::to_string(mesh_.num_vertices()) + " x " +
                       std::to_string(D));
  }
  if (!w0.allFinite()) throw InvalidInput("initial map has non-finite entries");
  state_ = AdmmState<D>{};
  state_.w = w0;
  pattern_ready_ = false;
  factor_ready_ = false;
  apply_constraints(constraints);
  {
    std::lock_guard<std::mutex> lock(mailbox_mutex_);
    mailbox_.reset();
  }
  g_.apply<D>(state_.w, state_.jac);
  state_.jac_prev = state_.jac;
  polar_init<D>(state_.jac, config_.energy, state_.u, state_.p);
  state_.lambda.assign(state_.jac.size(), Mat<D>::Zero());
  update_constants(true);
  best_prim_ = std::numeric_limits<double>::infinity();
  best_dual_ = std::numeric_limits<double>::infinity();
  last_improvement_ = 0;
  best_flips_ = std::numeric_limits<int>::max();
  last_flip_improvement_ = 0;
  grad_at_best_flips_ = 0.0;
}

template <int D>
void AdmmSolver<D>::post_constraints(HandleConstraints constraints) {
  constraints.validate(mesh_.num_vertices(), D);
  std::lock_guard<std::mutex> lock(mailbox_mutex_);
  mailbox_ = std::move(constraints);
}

template <int D>
void AdmmSolver<D>::consume_mailbox() {
  std::optional<HandleConstraints> next;
  {
    std::lock_guard<std::mutex> lock(mailbox_mutex_);
    next.swap(mailbox_);
  }
  if (!next) return;
  apply_constraints(std::move(*next));
  // New targets start a new descent; old error minima would trip the stall rule.
  best_prim_ = std::numeric_limits<double>::infinity();
  best_dual_ = std::numeric_limits<double>::infinity();
  last_improvement_ = state_.k;
  best_flips_ = std::numeric_limits<int>::max();
  last_flip_improvement_ = state_.k;
}

template <int D>
void AdmmSolver<D>::set_penalties(const Eigen::VectorXd& mu, const Eigen::VectorXd& h) {
  if (mu.size() != mesh_.num_elements() || h.size() != mesh_.num_elements()) {
    throw InvalidInput("set_penalties: one value per element expected");
  }
  state_.mu = mu;
  state_.h = h;
  factor_ready_ = false;
}

template <int D>
Eigen::MatrixXd AdmmSolver<D>::w_step() {
  if (!factor_ready_) refactorize();
  const int m = mesh_.num_elements();
  MatField<D> r(m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) r[i] = state_.mu(i) * (state_.u[i] * state_.p[i] - state_.lambda[i]);
  const Eigen::MatrixXd rhs = g_.apply_adjoint<D>(r);

  Eigen::MatrixXd w = pinned_values_;
  if (num_free_ > 0) {
    Eigen::MatrixXd b(num_free_, D);
    for (int v = 0; v < mesh_.num_vertices(); ++v)
      if (!pinned_[v]) b.row(free_slot_[v]) = rhs.row(v);
    b -= l_fp_ * pinned_values_;
    const Eigen::MatrixXd x = ldlt_.solve(b);
    for (int v = 0; v < mesh_.num_vertices(); ++v)
      if (!pinned_[v]) w.row(v) = x.row(free_slot_[v]);
  }
  return w;
}

template <int D>
void AdmmSolver<D>::iterate() {
  consume_mailbox();
  state_.w = w_step();
  state_.jac_prev.swap(state_.jac);
  g_.apply<D>(state_.w, state_.jac);

  const int m = mesh_.num_elements();
  std::vector<double> ratio(m, 0.0);
  const EnergyKind kind = config_.energy;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const Mat<D> u_old = state_.u[i];
    const Mat<D> lambda_old = state_.lambda[i];
    const Mat<D>& j = state_.jac[i];
    const double mu = state_.mu(i);
    const Mat<D> u = u_step<D>(j, lambda_old, state_.p[i], u_old, mu, state_.h(i));
    const Mat<D> q = symm<D>(u.transpose() * (j + lambda_old));
    const Mat<D> p = p_step<D>(kind, q, mesh_.measures(i), mu);
    const Mat<D> lambda = lambda_old + j - u * p;
    state_.u[i] = u;
    state_.p[i] = p;
    state_.lambda[i] = lambda;

    const Mat<D> change = mu * (lambda - lambda_old);
    const Mat<D> sym =
        0.5 * mu * ((lambda - lambda_old) + u * lambda.transpose() * u - u_old * lambda_old.transpose() * u_old);
    const double num = change.norm();
    const double den = sym.norm();
    const double scale = mu * (lambda.norm() + lambda_old.norm());
    ratio[i] = den > 1e-14 * scale && den > 0.0 ? num / den : 0.0;
  }
  state_.lambda_ratio = *std::max_element(ratio.begin(), ratio.end());
  ++state_.k;
}

template <int D>
ErrorTotals AdmmSolver<D>::compute_errors() const {
  const int m = mesh_.num_elements();
  ErrorTotals e;
  e.prim.resize(m);
  e.dual.resize(m);
  for (int i = 0; i < m; ++i) {
    e.prim[i] = (state_.jac[i] - state_.u[i] * state_.p[i]).norm();
    e.dual[i] = state_.mu(i) * (state_.jac[i] - state_.jac_prev[i]).norm();
  }
  double sp = 0.0;
  double sd = 0.0;
  for (int i = 0; i < m; ++i) {
    sp += e.prim[i] * e.prim[i];
    sd += e.dual[i] * e.dual[i];
  }
  e.e_prim = std::sqrt(sp);
  e.e_dual = std::sqrt(sd);
  return e;
}

template <int D>
double AdmmSolver<D>::augmented_lagrangian() const {
  double phi = 0.0;
  for (int i = 0; i < mesh_.num_elements(); ++i) {
    const std::optional<double> f = energy_density<D>(config_.energy, state_.p[i]);
    if (!f) return std::numeric_limits<double>::infinity();
    const Mat<D> up = state_.u[i] * state_.p[i];
    phi += mesh_.measures(i) * *f +
           0.5 * state_.mu(i) *
               ((state_.jac[i] - up + state_.lambda[i]).squaredNorm() - state_.lambda[i].squaredNorm());
  }
  return phi;
}

template <int D>
ConvergenceConstants AdmmSolver<D>::convergence_constants() const {
  const int m = mesh_.num_elements();
  ConvergenceConstants c;
  c.b.resize(m);
  c.f.resize(m);
  c.c_l.resize(m);
  c.c_lg.resize(m);
  c.mu_min.resize(m);
  c.h.resize(m);
  for (int i = 0; i < m; ++i) {
    const double w = mesh_.measures(i);
    const double grad = energy_gradient<D>(config_.energy, state_.p[i]).norm();
    const ElementConstants e = element_constants(config_.energy, D, grad, w, config_.gamma, config_.eps_slack);
    if (!(e.c_l <= e.c_lg * (1.0 + 1e-12) && e.c_lg <= 1.0 + 1e-12)) {
      throw SolverError("convergence constants violate C^L <= C^LG <= 1 at element " + std::to_string(i));
    }
    c.b(i) = e.b;
    c.f(i) = e.f;
    c.c_l(i) = e.c_l;
    c.c_lg(i) = e.c_lg;
    c.mu_min(i) = e.mu_min;
    c.h(i) = proximal_weight(w, e.b, state_.mu(i), config_.gamma, config_.eps_slack);
  }
  return c;
}

template <int D>
DiagnosticsRecord AdmmSolver<D>::diagnostics(const ErrorTotals& errors) const {
  DiagnosticsRecord r;
  r.iter = state_.k;
  r.e_prim = errors.e_prim;
  r.e_dual = errors.e_dual;
  r.max_e_prim = errors.prim.empty() ? 0.0 : *std::max_element(errors.prim.begin(), errors.prim.end());
  r.max_e_dual = errors.dual.empty() ? 0.0 : *std::max_element(errors.dual.begin(), errors.dual.end());
  const int m = mesh_.num_elements();
  double jac_sq = 0.0;
  double p_sq = 0.0;
  for (int i = 0; i < m; ++i) {
    const Mat<D>& j = state_.jac[i];
    jac_sq += j.squaredNorm();
    p_sq += state_.p[i].squaredNorm();
    if (!(j.determinant() > 0.0)) {
      ++r.flips;
    } else if (const auto f = energy_density<D>(config_.energy, j)) {
      r.energy += mesh_.measures(i) * *f;
    }
    r.max_grad_norm = std::max(r.max_grad_norm, energy_gradient<D>(config_.energy, state_.p[i]).norm());
  }
  r.phi = augmented_lagrangian();
  r.lambda_ratio = state_.lambda_ratio;
  r.mu_min = state_.mu.minCoeff();
  r.mu_max = state_.mu.maxCoeff();
  const double abs_part = config_.eps_abs * std::sqrt(static_cast<double>(D) * m);
  r.prim_threshold = abs_part + config_.eps_rel * std::max(std::sqrt(jac_sq), std::sqrt(p_sq));
  r.dual_threshold = abs_part + config_.eps_rel * g_.apply_adjoint<D>(state_.lambda).norm();
  return r;
}

template <int D>
bool AdmmSolver<D>::check_termination(const DiagnosticsRecord& r) const {
  if (r.flips > 0) return false;
  switch (config_.termination) {
    case TerminationMode::kDefault:
      return r.e_prim < r.prim_threshold && r.e_dual < r.dual_threshold;
    case TerminationMode::kFlipFreeOnly:
      return true;
    case TerminationMode::kTargetEnergy:
      return r.energy <= config_.target_energy;
  }
  return false;
}

template <int D>
bool AdmmSolver<D>::rescale(const ErrorTotals& errors) {
  update_constants(false);
  bool changed = false;
  for (int i = 0; i < mesh_.num_elements(); ++i) {
    const RescaleOutcome out =
        rescale_rule(state_.mu(i), errors.prim[i], errors.dual[i], config_.rho, 0.5 * state_.mu_min(i));
    if (out.mu != state_.mu(i)) {
      state_.lambda[i] *= out.lambda_scale;
      state_.mu(i) = out.mu;
      changed = true;
    }
  }
  update_constants(false);
  if (changed) factor_ready_ = false;
  ++state_.events;
  state_.k_last = state_.k;
  return changed;
}

template <int D>
std::optional<SolveStatus> AdmmSolver<D>::step(DiagnosticsRecord* record) {
  iterate();
  return finish_iteration(record);
}

template <int D>
std::optional<SolveStatus> AdmmSolver<D>::finish_iteration(DiagnosticsRecord* record) {
  const ErrorTotals errors = compute_errors();
  DiagnosticsRecord r = diagnostics(errors);
  std::optional<SolveStatus> status;
  if (!std::isfinite(r.e_prim) || !std::isfinite(r.e_dual)) {
    status = SolveStatus::kStalled;
  } else if (check_termination(r)) {
    status = SolveStatus::kConverged;
  } else {
    if (r.e_prim < best_prim_ * (1.0 - config_.stall_rel)) {
      best_prim_ = r.e_prim;
      last_improvement_ = state_.k;
    }
    if (r.e_dual < best_dual_ * (1.0 - config_.stall_rel)) {
      best_dual_ = r.e_dual;
      last_improvement_ = state_.k;
    }
    if (r.flips < best_flips_) {
      best_flips_ = r.flips;
      last_flip_improvement_ = state_.k;
      grad_at_best_flips_ = r.max_grad_norm;
    }
    const bool errors_stuck = state_.k - last_improvement_ >= config_.stall_window;
    const bool diverging = state_.k - last_flip_improvement_ >= config_.stall_window &&
                           r.max_grad_norm > grad_at_best_flips_;
    if (r.flips > 0 && (errors_stuck || diverging)) {
      status = SolveStatus::kStalled;
    } else if (config_.rescaling && rescale_schedule(state_.k, state_.events, state_.k_last, config_)) {
      rescale(errors);
      r.rescaled = true;
    }
  }
  if (record) *record = r;
  return status;
}

template <int D>
SolveResult AdmmSolver<D>::solve(std::ostream* log,
                                 const std::function<void(const DiagnosticsRecord&)>& on_iter) {
  start_ = std::chrono::steady_clock::now();
  SolveResult result;
  if (log) *log << kLogHeader << '\n';
  std::optional<SolveStatus> status;
  if (config_.termination == TerminationMode::kFlipFreeOnly &&
      count_flips(mesh_, g_, state_.w) == 0) {
    status = SolveStatus::kConverged;
  }
  while (!status && result.iterations < config_.max_iter) {
    DiagnosticsRecord r;
    status = step(&r);
    ++result.iterations;
    r.wall_ms = elapsed_ms(start_);
    if (log) write_log_row(*log, r);
    if (on_iter) on_iter(r);
    result.history.push_back(r);
  }
  result.status = status.value_or(SolveStatus::kMaxIter);
  result.w = state_.w;
  result.wall_ms = elapsed_ms(start_);
  return result;
}

SolveResult solve(const Mesh& mesh, const Eigen::MatrixXd& w0, const HandleConstraints& constraints,
                  const SolverConfig& config, std::ostream* log) {
  if (mesh.dim == 2) {
    AdmmSolver<2> solver(mesh, config);
    solver.initialize(w0, constraints);
    return solver.solve(log);
  }
  AdmmSolver<3> solver(mesh, config);
  solver.initialize(w0, constraints);
  return solver.solve(log);
}

template class AdmmSolver<2>;
template class AdmmSolver<3>;

}  // namespace flipfree
