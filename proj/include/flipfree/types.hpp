#pragma once

#include <Eigen/Core>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace flipfree {

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

using Mat2 = Mat<2>;
using Mat3 = Mat<3>;

/// Per-element matrix field, one d x d block per element.
template <int D>
using MatField = std::vector<Mat<D>, Eigen::aligned_allocator<Mat<D>>>;

inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

/// Thrown when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by the mesh loaders and savers.
class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the global linear system cannot be solved (disconnected
/// components without a pinned vertex, numerical breakdown).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flipfree
