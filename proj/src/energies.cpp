#include "flipfree/energies.hpp"

#include "flipfree/smallmat.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace flipfree {

namespace {

template <int D>
Mat<D> checked_inverse(const Mat<D>& x, const char* what) {
  const double det = x.determinant();
  if (!(det > 0.0)) {
    throw InvalidInput(std::string(what) + ": determinant is not positive");
  }
  return x.inverse();
}

// Solves L X = 0 on the free rows with the fixed rows of X prescribed.
Eigen::MatrixXd harmonic_solve(const SparseMatrix& l, const std::vector<bool>& fixed,
                               const Eigen::MatrixXd& fixed_values) {
  const int n = static_cast<int>(l.rows());
  std::vector<int> slot(n, -1);
  int nf = 0;
  for (int i = 0; i < n; ++i)
    if (!fixed[i]) slot[i] = nf++;
  Eigen::MatrixXd out = fixed_values;
  if (nf == 0) return out;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nf, fixed_values.cols());
  for (int col = 0; col < l.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(l, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (fixed[r]) continue;
      if (fixed[col]) {
        rhs.row(slot[r]) -= it.value() * fixed_values.row(col);
      } else {
        trip.emplace_back(slot[r], slot[col], it.value());
      }
    }
  }
  SparseMatrix reduced(nf, nf);
  reduced.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SparseMatrix> solver(reduced);
  if (solver.info() != Eigen::Success) {
    throw SolverError("harmonic solve: reduced system is singular (is every component anchored?)");
  }
  const Eigen::MatrixXd sol = solver.solve(rhs);
  for (int i = 0; i < n; ++i)
    if (!fixed[i]) out.row(i) = sol.row(slot[i]);
  return out;
}

SparseMatrix tutte_laplacian(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  const int k = static_cast<int>(mesh.elements.cols());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        const int i = mesh.elements(e, a);
        const int j = mesh.elements(e, b);
        edges.emplace(std::min(i, j), std::max(i, j));
      }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edges.size() * 4);
  for (const auto& [i, j] : edges) {
    const double len = (mesh.vertices.row(i) - mesh.vertices.row(j)).norm();
    const double wgt = 1.0 / len;
    trip.emplace_back(i, i, wgt);
    trip.emplace_back(j, j, wgt);
    trip.emplace_back(i, j, -wgt);
    trip.emplace_back(j, i, -wgt);
  }
  SparseMatrix l(mesh.num_vertices(), mesh.num_vertices());
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

template <int D>
std::optional<double> density(EnergyKind kind, const Mat<D>& x) {
  switch (kind) {
    case EnergyKind::kSymmetricGradient:
      return f_sg<D>(x);
    case EnergyKind::kSymmetricDirichlet:
      return f_sd<D>(x);
    case EnergyKind::kArap:
      return f_arap<D>(x);
  }
  return std::nullopt;
}

template <int D>
EnergyReport evaluate_impl(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w,
                           EnergyKind kind, bool per_element) {
  MatField<D> jac;
  g.apply<D>(w, jac);
  EnergyReport report;
  if (per_element) report.per_element.assign(jac.size(), 0.0);
  for (std::size_t i = 0; i < jac.size(); ++i) {
    if (!(jac[i].determinant() > 0.0)) {
      ++report.flips;
      if (kind != EnergyKind::kArap) continue;
    }
    const std::optional<double> f = density<D>(kind, jac[i]);
    if (!f) continue;
    const double value = mesh.measures(static_cast<Eigen::Index>(i)) * *f;
    report.total += value;
    if (per_element) report.per_element[i] = value;
  }
  report.barrier_active = report.flips > 0;
  return report;
}

template <int D>
std::vector<double> determinants(const JacobianOperator& g, const Eigen::MatrixXd& w) {
  MatField<D> jac;
  g.apply<D>(w, jac);
  std::vector<double> det(jac.size());
  for (std::size_t i = 0; i < jac.size(); ++i) det[i] = jac[i].determinant();
  return det;
}

std::vector<double> all_determinants(const JacobianOperator& g, const Eigen::MatrixXd& w) {
  return g.dim() == 2 ? determinants<2>(g, w) : determinants<3>(g, w);
}

}  // namespace

std::string energy_name(EnergyKind kind) {
  switch (kind) {
    case EnergyKind::kSymmetricGradient:
      return "sg";
    case EnergyKind::kSymmetricDirichlet:
      return "sd";
    case EnergyKind::kArap:
      return "arap";
  }
  return "unknown";
}

EnergyKind parse_energy(const std::string& name) {
  if (name == "sg" || name == "symmetric_gradient") return EnergyKind::kSymmetricGradient;
  if (name == "sd" || name == "symmetric_dirichlet") return EnergyKind::kSymmetricDirichlet;
  if (name == "arap") return EnergyKind::kArap;
  throw InvalidInput("unknown energy '" + name + "' (expected sg, sd or arap)");
}

template <int D>
std::optional<double> f_sg(const Mat<D>& x) {
  const double det = x.determinant();
  if (!(det > 0.0)) return std::nullopt;
  return 0.5 * x.squaredNorm() - std::log(det);
}

template <int D>
Mat<D> grad_f_sg(const Mat<D>& x) {
  return x - checked_inverse<D>(x, "grad_f_sg").transpose();
}

template <int D>
std::optional<double> f_sd(const Mat<D>& x) {
  if (!(x.determinant() > 0.0)) return std::nullopt;
  return 0.5 * (x.squaredNorm() + x.inverse().squaredNorm());
}

template <int D>
Mat<D> grad_f_sd(const Mat<D>& x) {
  const Mat<D> inv = checked_inverse<D>(x, "grad_f_sd");
  return x - inv.transpose() * inv * inv.transpose();
}

template <int D>
double f_arap(const Mat<D>& x) {
  return 0.5 * (x - closest_rotation<D>(x)).squaredNorm();
}

template <int D>
std::optional<double> energy_density(EnergyKind kind, const Mat<D>& x) {
  return density<D>(kind, x);
}

template <int D>
Mat<D> energy_gradient(EnergyKind kind, const Mat<D>& x) {
  switch (kind) {
    case EnergyKind::kSymmetricGradient:
      return grad_f_sg<D>(x);
    case EnergyKind::kSymmetricDirichlet:
      return grad_f_sd<D>(x);
    case EnergyKind::kArap:
      break;
  }
  throw InvalidInput("energy_gradient: ARAP is evaluation-only");
}

EnergyReport evaluate(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w,
                      EnergyKind kind, bool per_element) {
  return g.dim() == 2 ? evaluate_impl<2>(mesh, g, w, kind, per_element)
                      : evaluate_impl<3>(mesh, g, w, kind, per_element);
}

int count_flips(const Mesh& /*mesh*/, const JacobianOperator& g, const Eigen::MatrixXd& w) {
  const std::vector<double> det = all_determinants(g, w);
  return static_cast<int>(std::count_if(det.begin(), det.end(), [](double v) { return !(v > 0.0); }));
}

double area_distortion(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w) {
  const std::vector<double> det = all_determinants(g, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    acc += mesh.measures(static_cast<Eigen::Index>(i)) * (det[i] - 1.0) * (det[i] - 1.0);
  }
  return acc / mesh.total_measure();
}

Eigen::MatrixXd tutte_init(const Mesh& mesh) {
  if (mesh.dim != 2) {
    throw InvalidInput("tutte_init: tet meshes need boundary targets");
  }
  const std::vector<int> loop = boundary_loop(mesh);
  const int nb = static_cast<int>(loop.size());
  std::vector<double> cumulative(nb + 1, 0.0);
  for (int i = 0; i < nb; ++i) {
    cumulative[i + 1] =
        cumulative[i] + (mesh.vertices.row(loop[(i + 1) % nb]) - mesh.vertices.row(loop[i])).norm();
  }
  // Planar input with clockwise faces keeps its orientation.
  double direction = 1.0;
  if (mesh.embed_dim == 2) {
    const Eigen::MatrixXd local = local_element_coordinates(mesh, 0);
    const Eigen::Vector2d a = (local.row(1) - local.row(0)).transpose();
    const Eigen::Vector2d b = (local.row(2) - local.row(0)).transpose();
    if (a(0) * b(1) - a(1) * b(0) < 0.0) direction = -1.0;
  }
  constexpr double kTwoPi = 6.283185307179586;
  std::vector<bool> fixed(mesh.num_vertices(), false);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(mesh.num_vertices(), 2);
  for (int i = 0; i < nb; ++i) {
    const double theta = direction * kTwoPi * cumulative[i] / cumulative[nb];
    w(loop[i], 0) = std::cos(theta);
    w(loop[i], 1) = std::sin(theta);
    fixed[loop[i]] = true;
  }
  return harmonic_solve(tutte_laplacian(mesh), fixed, w);
}

Eigen::MatrixXd tutte_init(const Mesh& mesh, const HandleConstraints& boundary) {
  boundary.validate(mesh.num_vertices(), mesh.target_dim);
  std::vector<bool> fixed(mesh.num_vertices(), false);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(mesh.num_vertices(), mesh.target_dim);
  for (const Handle& h : boundary.handles()) {
    fixed[h.vertex] = true;
    w.row(h.vertex) = h.position.transpose();
  }
  std::vector<int> missing;
  for (int v : boundary_vertices(mesh))
    if (!fixed[v]) missing.push_back(v);
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + std::to_string(missing[i]);
    if (missing.size() > 20) list += ", ...";
    throw InvalidInput(std::to_string(missing.size()) + " boundary vertices have no target: " + list);
  }
  return harmonic_solve(tutte_laplacian(mesh), fixed, w);
}

std::pair<int, int> farthest_boundary_pair(const Mesh& mesh) {
  const std::vector<int> ids = boundary_vertices(mesh);
  if (ids.size() < 2) throw MeshError("mesh has fewer than two boundary vertices");
  std::pair<int, int> best{ids[0], ids[1]};
  double best_d = -1.0;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const double dist = (mesh.vertices.row(ids[a]) - mesh.vertices.row(ids[b])).squaredNorm();
      if (dist > best_d) {
        best_d = dist;
        best = {ids[a], ids[b]};
      }
    }
  }
  return best;
}

Eigen::MatrixXd conformal_init(const Mesh& mesh, std::pair<int, int> pins) {
  if (mesh.dim != 2) throw InvalidInput("conformal_init requires a triangle mesh");
  const int n = mesh.num_vertices();
  const auto [pa, pb] = pins;
  if (pa < 0 || pb < 0 || pa >= n || pb >= n) throw InvalidInput("conformal_init: pin out of range");
  if (pa == pb) throw InvalidInput("conformal_init: pins must be distinct vertices");
  const double dist = (mesh.vertices.row(pa) - mesh.vertices.row(pb)).norm();
  if (!(dist > 0.0)) throw InvalidInput("conformal_init: pins are coincident");

  const JacobianOperator g = build_gradient_operator(mesh);
  // Unknown x = [W(:,0); W(:,1)]. Per element the residuals
  // sqrt(w) (J00 - J11) and sqrt(w) (J01 + J10) are linear in x.
  std::vector<Eigen::Triplet<double>> trip;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Eigen::MatrixXd b = g.block(e);
    const double s = std::sqrt(mesh.measures(e));
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.elements(e, k);
      trip.emplace_back(2 * e, v, s * b(k, 0));
      trip.emplace_back(2 * e, n + v, -s * b(k, 1));
      trip.emplace_back(2 * e + 1, v, s * b(k, 1));
      trip.emplace_back(2 * e + 1, n + v, s * b(k, 0));
    }
  }
  SparseMatrix a(2 * mesh.num_elements(), 2 * n);
  a.setFromTriplets(trip.begin(), trip.end());
  const SparseMatrix normal = SparseMatrix(a.transpose()) * a;

  std::vector<bool> fixed(2 * n, false);
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(2 * n, 1);
  fixed[pa] = fixed[n + pa] = true;
  fixed[pb] = fixed[n + pb] = true;
  values(pb, 0) = dist;
  const Eigen::MatrixXd x = harmonic_solve(normal, fixed, values);
  Eigen::MatrixXd w(n, 2);
  w.col(0) = x.col(0).head(n);
  w.col(1) = x.col(0).tail(n);
  return w;
}

Eigen::MatrixXd conformal_init(const Mesh& mesh) {
  return conformal_init(mesh, farthest_boundary_pair(mesh));
}

template std::optional<double> f_sg<2>(const Mat2&);
template std::optional<double> f_sg<3>(const Mat3&);
template Mat2 grad_f_sg<2>(const Mat2&);
template Mat3 grad_f_sg<3>(const Mat3&);
template std::optional<double> f_sd<2>(const Mat2&);
template std::optional<double> f_sd<3>(const Mat3&);
template Mat2 grad_f_sd<2>(const Mat2&);
template Mat3 grad_f_sd<3>(const Mat3&);
template double f_arap<2>(const Mat2&);
template double f_arap<3>(const Mat3&);
template std::optional<double> energy_density<2>(EnergyKind, const Mat2&);
template std::optional<double> energy_density<3>(EnergyKind, const Mat3&);
template Mat2 energy_gradient<2>(EnergyKind, const Mat2&);
template Mat3 energy_gradient<3>(EnergyKind, const Mat3&);

}  // namespace flipfree
