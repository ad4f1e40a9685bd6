#pragma once

#include "flipfree/jacobian.hpp"
#include "flipfree/mesh.hpp"
#include "flipfree/types.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flipfree {

/// Symmetric gradient and symmetric Dirichlet admit a closed-form P-step;
/// ARAP is for evaluation only.
enum class EnergyKind { kSymmetricGradient, kSymmetricDirichlet, kArap };

std::string energy_name(EnergyKind kind);

/// Accepts "sg", "sd", "arap" and the long names.
EnergyKind parse_energy(const std::string& name);

/// f_G(X) = 1/2 |X|^2 - log det X. Empty when det X <= 0.
template <int D>
std::optional<double> f_sg(const Mat<D>& x);

/// X - X^{-T}. Throws InvalidInput when det X <= 0.
template <int D>
Mat<D> grad_f_sg(const Mat<D>& x);

/// f_D(X) = 1/2 (|X|^2 + |X^{-1}|^2). Empty when det X <= 0.
template <int D>
std::optional<double> f_sd(const Mat<D>& x);

/// X - X^{-T} X^{-1} X^{-T}. Throws InvalidInput when det X <= 0.
template <int D>
Mat<D> grad_f_sd(const Mat<D>& x);

/// 1/2 |X - R|^2 with R the rotation closest to X.
template <int D>
double f_arap(const Mat<D>& x);

/// Dispatch on kind. ARAP never returns empty.
template <int D>
std::optional<double> energy_density(EnergyKind kind, const Mat<D>& x);

/// Gradient of the solvable energies. Throws InvalidInput for ARAP.
template <int D>
Mat<D> energy_gradient(EnergyKind kind, const Mat<D>& x);

struct EnergyReport {
  double total = 0.0;  // sum of w_i f over elements with det > 0
  int flips = 0;       // elements with det <= 0
  bool barrier_active = false;
  std::vector<double> per_element;  // filled on request; flipped elements hold 0
};

EnergyReport evaluate(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w,
                      EnergyKind kind, bool per_element = false);

/// Number of elements whose Jacobian has nonpositive determinant.
int count_flips(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w);

/// sum_i w_i (det J_i - 1)^2 / sum_i w_i. Our own area-distortion summary.
double area_distortion(const Mesh& mesh, const JacobianOperator& g, const Eigen::MatrixXd& w);

/// Tutte embedding of a disk-topology triangle mesh: boundary on the unit
/// circle spaced by arc length, edge weights 1 / |V_i - V_j|.
Eigen::MatrixXd tutte_init(const Mesh& mesh);

/// Tutte extension into a tet mesh with every boundary vertex fixed by
/// `boundary`. Throws InvalidInput listing boundary vertices without a target.
Eigen::MatrixXd tutte_init(const Mesh& mesh, const HandleConstraints& boundary);

/// The two boundary vertices farthest apart in the source mesh, smaller id
/// first. Ties resolve to the lexicographically smallest pair.
std::pair<int, int> farthest_boundary_pair(const Mesh& mesh);

/// Least-squares conformal map with two pins: the first pin goes to the
/// origin and the second to (|V_b - V_a|, 0).
Eigen::MatrixXd conformal_init(const Mesh& mesh, std::pair<int, int> pins);
Eigen::MatrixXd conformal_init(const Mesh& mesh);

}  // namespace flipfree
