#pragma once

#include "flipfree/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flipfree {

enum class MeshFormat { kObj, kOff, kTet };

/// Triangle surface (planar or embedded in 3D) or tetrahedral volume.
/// Immutable after construction through make_mesh / load_mesh.
struct Mesh {
  Eigen::MatrixXd vertices;  // n x embed_dim
  Eigen::MatrixXi elements;  // m x (dim + 1), 0-based
  int dim = 2;               // element dimension d
  int embed_dim = 2;         // d_iota
  int target_dim = 2;        // d_o
  Eigen::VectorXd measures;  // area or volume per element

  /// Per-vertex texture coordinates read from OBJ `vt` records, if the file
  /// carried one UV per vertex.
  std::optional<Eigen::MatrixXd> texcoords;

  [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices.rows()); }
  [[nodiscard]] int num_elements() const { return static_cast<int>(elements.rows()); }
  [[nodiscard]] double total_measure() const { return measures.sum(); }
  [[nodiscard]] double bbox_diagonal() const;
};

/// (vertex, target position) pairs, positions in target_dim coordinates.
struct Handle {
  int vertex = 0;
  Eigen::VectorXd position;
};

class HandleConstraints {
 public:
  HandleConstraints() = default;
  explicit HandleConstraints(std::vector<Handle> handles);

  /// Throws InvalidInput on duplicates, out-of-range ids or wrong dimension.
  void validate(int num_vertices, int target_dim) const;

  [[nodiscard]] const std::vector<Handle>& handles() const { return handles_; }
  [[nodiscard]] bool empty() const { return handles_.empty(); }
  [[nodiscard]] std::size_t size() const { return handles_.size(); }

  /// Sorted vertex ids; two constraint sets with equal ids share a
  /// factorization.
  [[nodiscard]] std::vector<int> vertex_ids() const;

  /// Same vertex set, possibly different positions.
  [[nodiscard]] bool same_vertices(const HandleConstraints& other) const;

 private:
  std::vector<Handle> handles_;
};

/// Builds and validates a mesh from raw arrays. `target_dim` defaults to 2
/// for triangles and 3 for tets. Throws MeshError on invalid indices or
/// degenerate elements (measure <= 1e-14 * max measure).
Mesh make_mesh(Eigen::MatrixXd vertices, Eigen::MatrixXi elements, int dim);

MeshFormat format_from_path(const std::filesystem::path& path);

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
Mesh load_mesh(const std::filesystem::path& path);

/// OBJ with `v`, `vt` (one per vertex, from `uv`) and `f v/vt` records.
void save_obj_with_uv(const std::filesystem::path& path, const Mesh& mesh,
                      const Eigen::MatrixXd& uv);

/// Writes `positions` (n x k, k in {2, 3}) as the vertex coordinates of the
/// mesh in the requested format.
void save_mesh(const std::filesystem::path& path, const Mesh& mesh,
               const Eigen::MatrixXd& positions, MeshFormat format);

/// Ordered boundary cycle of a triangle mesh with exactly one boundary loop,
/// oriented consistently with the faces. Throws MeshError otherwise.
std::vector<int> boundary_loop(const Mesh& mesh);

/// Outward-oriented boundary triangles of a tet mesh (k x 3).
Eigen::MatrixXi boundary_surface(const Mesh& mesh);

/// Sorted ids of the vertices on the boundary (loop or surface).
std::vector<int> boundary_vertices(const Mesh& mesh);

/// Connected components over shared vertices; returns a component id per
/// vertex and the number of components. Isolated vertices form their own
/// component.
int connected_components(const Mesh& mesh, std::vector<int>& component);

}  // namespace flipfree
