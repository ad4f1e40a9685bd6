#include "flipfree/jacobian.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flipfree {

Eigen::MatrixXd local_element_coordinates(const Mesh& mesh, int element) {
  const int d = mesh.dim;
  Eigen::MatrixXd local(d + 1, d);
  if (d == 2 && mesh.embed_dim == 3) {
    const Eigen::Vector3d v0 = mesh.vertices.row(mesh.elements(element, 0)).transpose();
    const Eigen::Vector3d v1 = mesh.vertices.row(mesh.elements(element, 1)).transpose();
    const Eigen::Vector3d v2 = mesh.vertices.row(mesh.elements(element, 2)).transpose();
    const Eigen::Vector3d e1 = (v1 - v0).normalized();
    const Eigen::Vector3d n = (v1 - v0).cross(v2 - v0);
    const Eigen::Vector3d e2 = n.cross(e1).normalized();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d p = mesh.vertices.row(mesh.elements(element, k)).transpose() - v0;
      local(k, 0) = p.dot(e1);
      local(k, 1) = p.dot(e2);
    }
    return local;
  }
  for (int k = 0; k <= d; ++k) local.row(k) = mesh.vertices.row(mesh.elements(element, k)).head(d);
  return local;
}

JacobianOperator build_gradient_operator(const Mesh& mesh) {
  JacobianOperator g;
  const int d = mesh.dim;
  g.dim_ = d;
  g.num_vertices_ = mesh.num_vertices();
  g.elements_ = mesh.elements;
  g.blocks_.resize(static_cast<Eigen::Index>(mesh.num_elements()) * (d + 1), d);

  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(d + 1, d);
  diff.row(0).setConstant(-1.0);
  diff.bottomRows(d).setIdentity();

  for (int i = 0; i < mesh.num_elements(); ++i) {
    const Eigen::MatrixXd local = local_element_coordinates(mesh, i);
    // Columns are the source edge vectors V_k - V_0.
    const Eigen::MatrixXd edges = (diff.transpose() * local).transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(edges);
    if (!lu.isInvertible()) {
      throw MeshError("element " + std::to_string(i) + " is degenerate");
    }
    g.blocks_.block(static_cast<Eigen::Index>(i) * (d + 1), 0, d + 1, d) = diff * lu.inverse();
  }
  return g;
}

Eigen::MatrixXd JacobianOperator::block(int element) const {
  return blocks_.block(static_cast<Eigen::Index>(element) * (dim_ + 1), 0, dim_ + 1, dim_);
}

template <int D>
void JacobianOperator::apply(const Eigen::MatrixXd& w, MatField<D>& out) const {
  if (D != dim_) throw InvalidInput("apply: dimension mismatch");
  if (w.rows() != num_vertices_ || w.cols() != D) {
    throw InvalidInput("apply: W must be " + std::to_string(num_vertices_) + " x " +
                       std::to_string(D));
  }
  const int m = num_elements();
  out.resize(m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const Eigen::Matrix<double, D + 1, D> b =
        blocks_.template block<D + 1, D>(static_cast<Eigen::Index>(i) * (D + 1), 0);
    Eigen::Matrix<double, D + 1, D> we;
    for (int k = 0; k <= D; ++k) we.row(k) = w.row(elements_(i, k));
    out[i] = we.transpose() * b;
  }
}

template <int D>
Eigen::MatrixXd JacobianOperator::apply_adjoint(const MatField<D>& r) const {
  if (D != dim_) throw InvalidInput("apply_adjoint: dimension mismatch");
  if (static_cast<int>(r.size()) != num_elements()) {
    throw InvalidInput("apply_adjoint: expected " + std::to_string(num_elements()) + " blocks");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num_vertices_, D);
  for (int i = 0; i < num_elements(); ++i) {
    const Eigen::Matrix<double, D + 1, D> b =
        blocks_.template block<D + 1, D>(static_cast<Eigen::Index>(i) * (D + 1), 0);
    const Eigen::Matrix<double, D + 1, D> contrib = b * r[i].transpose();
    for (int k = 0; k <= D; ++k) out.row(elements_(i, k)) += contrib.row(k);
  }
  return out;
}

SparseMatrix JacobianOperator::assemble_weighted_laplacian(const Eigen::VectorXd& mu) const {
  if (mu.size() != num_elements()) throw InvalidInput("assemble_weighted_laplacian: weight count");
  const int k = dim_ + 1;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(num_elements()) * k * k);
  for (int i = 0; i < num_elements(); ++i) {
    if (!(mu(i) > 0.0)) {
      throw InvalidInput("assemble_weighted_laplacian: weight of element " + std::to_string(i) +
                         " is not positive");
    }
    const Eigen::MatrixXd b = block(i);
    const Eigen::MatrixXd local = mu(i) * (b * b.transpose());
    for (int a = 0; a < k; ++a)
      for (int c = 0; c < k; ++c) triplets.emplace_back(elements_(i, a), elements_(i, c), local(a, c));
  }
  SparseMatrix l(num_vertices_, num_vertices_);
  l.setFromTriplets(triplets.begin(), triplets.end());
  l.makeCompressed();
  return l;
}

template void JacobianOperator::apply<2>(const Eigen::MatrixXd&, MatField<2>&) const;
template void JacobianOperator::apply<3>(const Eigen::MatrixXd&, MatField<3>&) const;
template Eigen::MatrixXd JacobianOperator::apply_adjoint<2>(const MatField<2>&) const;
template Eigen::MatrixXd JacobianOperator::apply_adjoint<3>(const MatField<3>&) const;

}  // namespace flipfree
