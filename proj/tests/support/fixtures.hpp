#pragma once

// Deterministic mesh fixtures shared by the tests and the data/ generator.

#include "flipfree/mesh.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace flipfree::fixtures {

/// Uniform [0, 1) from raw std::mt19937 output, whose sequence is fixed by
/// the standard (unlike the distribution classes).
class Uniform {
 public:
  explicit Uniform(std::uint32_t seed) : gen_(seed) {}
  double operator()() { return static_cast<double>(gen_()) * 0x1p-32; }
  double operator()(double lo, double hi) { return lo + (hi - lo) * (*this)(); }

 private:
  std::mt19937 gen_;
};

/// Unit hemisphere, pole plus `rings` rings of `segments` vertices; the
/// equator is the boundary. 10 x 26 gives 261 vertices and 494 faces.
Mesh hemisphere(int rings = 10, int segments = 26);

/// Concentric rings of radius 1..R with 6r jittered vertices each, zipped
/// into triangles and lifted onto a saddle. R = 6 gives 216 faces.
Mesh irregular_disk(int rings = 6, std::uint32_t seed = 7);

/// Planar grid of cells x cells squares over [0, size]^2, two triangles each.
Mesh grid(int cells = 20, double size = 1.0);

/// Planar bar [0, length] x [0, height] with nx x ny cells.
Mesh bar(int nx = 8, int ny = 2, double length = 4.0, double height = 1.0);

/// Regular hexagon of unit radius around a center vertex (vertex 0).
Mesh hexagon_fan();

/// Closed octahedron (no boundary).
Mesh octahedron();

/// [0, 1]^3 split into cells^3 cubes of six Kuhn tets each.
Mesh cube_tets(int cells = 5);

/// Mean edge length over element edges.
double mean_edge_length(const Mesh& mesh);

/// Interior vertices moved by `fraction` * mean edge length in a
/// deterministic pseudo-random direction.
Eigen::MatrixXd perturb_interior(const Mesh& mesh, double fraction, std::uint32_t seed = 11);

/// Boundary targets of a tet mesh rotated about the z axis through the
/// center of [0,1]^3 by angle_deg * z.
HandleConstraints twisted_boundary(const Mesh& mesh, double angle_deg);

/// Reflects every UV vertex within `radius` of `center` across the line
/// through `center` along the y axis.
Eigen::MatrixXd reflect_patch(const Eigen::MatrixXd& uv, const Eigen::Vector2d& center, double radius);

}  // namespace flipfree::fixtures
