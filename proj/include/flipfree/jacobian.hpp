#pragma once

#include "flipfree/mesh.hpp"
#include "flipfree/types.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace flipfree {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Piecewise-linear Jacobian operator G. Element i owns a (d+1) x d block B_i
/// with (GW)_i = W_i^T B_i, where W_i stacks the element's target vertex
/// positions as rows. The identity map therefore has Jacobian I.
///
/// Triangles embedded in 3D are expressed in a per-face frame with
/// e1 = normalize(V1 - V0) and e2 = normalize(n x e1).
class JacobianOperator {
 public:
  JacobianOperator() = default;

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int num_vertices() const { return num_vertices_; }
  [[nodiscard]] int num_elements() const { return static_cast<int>(elements_.rows()); }
  [[nodiscard]] const Eigen::MatrixXi& elements() const { return elements_; }

  /// Block B_i as a (d+1) x d matrix.
  [[nodiscard]] Eigen::MatrixXd block(int element) const;

  /// Per-element Jacobians of `w` (n x d).
  template <int D>
  void apply(const Eigen::MatrixXd& w, MatField<D>& out) const;

  /// Adjoint under the Frobenius pairing: sum_i (GW)_i . R_i = <W, G^T R>.
  /// Accumulates in element order so results do not depend on threading.
  template <int D>
  [[nodiscard]] Eigen::MatrixXd apply_adjoint(const MatField<D>& r) const;

  /// L = sum_i mu_i G_i^T G_i as an n x n matrix acting on each coordinate
  /// column. Throws InvalidInput on a nonpositive weight.
  [[nodiscard]] SparseMatrix assemble_weighted_laplacian(const Eigen::VectorXd& mu) const;

  friend JacobianOperator build_gradient_operator(const Mesh& mesh);

 private:
  int dim_ = 2;
  int num_vertices_ = 0;
  Eigen::MatrixXi elements_;
  Eigen::MatrixXd blocks_;  // m*(d+1) x d, element i at rows [i*(d+1), (i+1)*(d+1))
};

JacobianOperator build_gradient_operator(const Mesh& mesh);

/// Coordinates of each element's vertices in its local frame, (d+1) x d per
/// element stacked like the operator blocks. For planar triangles and tets
/// this is the raw vertex data; for surface triangles the face frame.
Eigen::MatrixXd local_element_coordinates(const Mesh& mesh, int element);

}  // namespace flipfree
