#include "fixtures.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

namespace flipfree::fixtures {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXi to_matrix(const std::vector<std::array<int, 3>>& faces) {
  Eigen::MatrixXi f(faces.size(), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int k = 0; k < 3; ++k) f(i, k) = faces[i][k];
  return f;
}

Eigen::MatrixXd to_matrix(const std::vector<Eigen::Vector3d>& pts, int cols) {
  Eigen::MatrixXd v(pts.size(), cols);
  for (std::size_t i = 0; i < pts.size(); ++i) v.row(i) = pts[i].head(cols).transpose();
  return v;
}

// Rectangle [0, lx] x [0, ly] with nx x ny cells.
Mesh rectangle(int nx, int ny, double lx, double ly) {
  std::vector<Eigen::Vector3d> v;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.emplace_back(lx * i / nx, ly * j / ny, 0.0);
  std::vector<std::array<int, 3>> f;
  const auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return make_mesh(to_matrix(v, 2), to_matrix(f), 2);
}

}  // namespace

Mesh hemisphere(int rings, int segments) {
  std::vector<Eigen::Vector3d> v{{0.0, 0.0, 1.0}};
  for (int r = 1; r <= rings; ++r) {
    const double theta = 0.5 * kPi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * kPi * s / segments;
      v.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
    }
  }
  const auto ring = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  std::vector<std::array<int, 3>> f;
  for (int s = 0; s < segments; ++s) f.push_back({0, ring(1, s), ring(1, s + 1)});
  for (int r = 1; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      f.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      f.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
  }
  return make_mesh(to_matrix(v, 3), to_matrix(f), 2);
}

Mesh irregular_disk(int rings, std::uint32_t seed) {
  Uniform rng(seed);
  std::vector<Eigen::Vector3d> v{{0.0, 0.0, 0.0}};
  std::vector<std::vector<int>> ids(rings + 1);
  std::vector<std::vector<double>> angles(rings + 1);
  ids[0] = {0};
  angles[0] = {0.0};
  for (int r = 1; r <= rings; ++r) {
    const int n = 6 * r;
    const double step = 2.0 * kPi / n;
    for (int k = 0; k < n; ++k) {
      const double a = step * (k + rng(-0.25, 0.25));
      const double rad = r + rng(-0.2, 0.2);
      ids[r].push_back(static_cast<int>(v.size()));
      angles[r].push_back(a);
      v.emplace_back(rad * std::cos(a), rad * std::sin(a), 0.0);
    }
  }
  std::vector<std::array<int, 3>> f;
  for (int k = 0; k < 6; ++k) f.push_back({0, ids[1][k], ids[1][(k + 1) % 6]});
  for (int r = 2; r <= rings; ++r) {
    const auto& in = ids[r - 1];
    const auto& out = ids[r];
    const int na = static_cast<int>(in.size());
    const int nb = static_cast<int>(out.size());
    const auto next_angle = [&](const std::vector<double>& a, int i) {
      const int n = static_cast<int>(a.size());
      return i + 1 < n ? a[i + 1] : a[0] + 2.0 * kPi;
    };
    int i = 0;
    int j = 0;
    while (i < na || j < nb) {
      const bool advance_out =
          i == na || (j < nb && next_angle(angles[r], j) <= next_angle(angles[r - 1], i));
      if (advance_out) {
        f.push_back({in[i % na], out[j], out[(j + 1) % nb]});
        ++j;
      } else {
        f.push_back({in[i], out[j % nb], in[(i + 1) % na]});
        ++i;
      }
    }
  }
  for (auto& tri : f) {
    const Eigen::Vector3d a = v[tri[1]] - v[tri[0]];
    const Eigen::Vector3d b = v[tri[2]] - v[tri[0]];
    if (a(0) * b(1) - a(1) * b(0) < 0.0) std::swap(tri[1], tri[2]);
  }
  const double lift = 0.05;
  for (auto& p : v) p(2) = lift * (p(0) * p(0) - p(1) * p(1));
  return make_mesh(to_matrix(v, 3), to_matrix(f), 2);
}

Mesh grid(int cells, double size) { return rectangle(cells, cells, size, size); }

Mesh bar(int nx, int ny, double length, double height) { return rectangle(nx, ny, length, height); }

Mesh hexagon_fan() {
  std::vector<Eigen::Vector3d> v{{0.0, 0.0, 0.0}};
  for (int k = 0; k < 6; ++k) v.emplace_back(std::cos(kPi * k / 3.0), std::sin(kPi * k / 3.0), 0.0);
  std::vector<std::array<int, 3>> f;
  for (int k = 0; k < 6; ++k) f.push_back({0, 1 + k, 1 + (k + 1) % 6});
  return make_mesh(to_matrix(v, 2), to_matrix(f), 2);
}

Mesh octahedron() {
  std::vector<Eigen::Vector3d> v{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> f{{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                                    {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return make_mesh(to_matrix(v, 3), to_matrix(f), 2);
}

Mesh cube_tets(int cells) {
  const int n = cells + 1;
  std::vector<Eigen::Vector3d> v;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) v.emplace_back(double(i) / cells, double(j) / cells, double(k) / cells);
  const auto id = [&](int i, int j, int k) { return (k * n + j) * n + i; };
  std::vector<std::array<int, 4>> tets;
  std::array<int, 3> perm{0, 1, 2};
  for (int k = 0; k < cells; ++k) {
    for (int j = 0; j < cells; ++j) {
      for (int i = 0; i < cells; ++i) {
        std::sort(perm.begin(), perm.end());
        do {
          std::array<int, 3> c{i, j, k};
          std::array<int, 4> t{};
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          Eigen::Matrix3d e;
          for (int s = 0; s < 3; ++s) e.col(s) = v[t[s + 1]] - v[t[0]];
          if (e.determinant() < 0.0) std::swap(t[2], t[3]);
          tets.push_back(t);
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
  }
  Eigen::MatrixXi t(tets.size(), 4);
  for (std::size_t i = 0; i < tets.size(); ++i)
    for (int s = 0; s < 4; ++s) t(i, s) = tets[i][s];
  return make_mesh(to_matrix(v, 3), t, 3);
}

double mean_edge_length(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  const int k = static_cast<int>(mesh.elements.cols());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        const int i = mesh.elements(e, a);
        const int j = mesh.elements(e, b);
        edges.emplace(std::min(i, j), std::max(i, j));
      }
  double total = 0.0;
  for (const auto& [i, j] : edges) total += (mesh.vertices.row(i) - mesh.vertices.row(j)).norm();
  return total / static_cast<double>(edges.size());
}

Eigen::MatrixXd perturb_interior(const Mesh& mesh, double fraction, std::uint32_t seed) {
  Uniform rng(seed);
  const double amount = fraction * mean_edge_length(mesh);
  const std::vector<int> boundary = boundary_vertices(mesh);
  std::vector<bool> on_boundary(mesh.num_vertices(), false);
  for (int v : boundary) on_boundary[v] = true;
  Eigen::MatrixXd w = mesh.vertices.leftCols(mesh.target_dim);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (on_boundary[v]) continue;
    if (mesh.target_dim == 2) {
      const double a = rng(0.0, 2.0 * kPi);
      w(v, 0) += amount * std::cos(a);
      w(v, 1) += amount * std::sin(a);
    } else {
      const double z = rng(-1.0, 1.0);
      const double a = rng(0.0, 2.0 * kPi);
      const double s = std::sqrt(1.0 - z * z);
      w.row(v) += amount * Eigen::RowVector3d(s * std::cos(a), s * std::sin(a), z);
    }
  }
  return w;
}

HandleConstraints twisted_boundary(const Mesh& mesh, double angle_deg) {
  std::vector<Handle> handles;
  for (int v : boundary_vertices(mesh)) {
    const Eigen::Vector3d p = mesh.vertices.row(v).transpose();
    const double a = angle_deg * kPi / 180.0 * p(2);
    const double x = p(0) - 0.5;
    const double y = p(1) - 0.5;
    Eigen::VectorXd q(3);
    q << 0.5 + std::cos(a) * x - std::sin(a) * y, 0.5 + std::sin(a) * x + std::cos(a) * y, p(2);
    handles.push_back({v, q});
  }
  return HandleConstraints(std::move(handles));
}

Eigen::MatrixXd reflect_patch(const Eigen::MatrixXd& uv, const Eigen::Vector2d& center, double radius) {
  Eigen::MatrixXd out = uv;
  for (int v = 0; v < uv.rows(); ++v) {
    if ((uv.row(v).transpose() - center).norm() < radius) out(v, 0) = 2.0 * center(0) - uv(v, 0);
  }
  return out;
}

}  // namespace flipfree::fixtures
