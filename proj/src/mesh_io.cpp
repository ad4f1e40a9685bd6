#include "flipfree/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace flipfree {

namespace {

constexpr double kDegenerateRel = 1e-14;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double element_measure(const Eigen::MatrixXd& v, const Eigen::MatrixXi& t, int e, int dim) {
  if (dim == 2) {
    Eigen::Vector3d p[3];
    for (int k = 0; k < 3; ++k) {
      p[k].setZero();
      p[k].head(v.cols()) = v.row(t(e, k)).transpose();
    }
    return 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
  }
  Eigen::Matrix3d edges;
  for (int k = 0; k < 3; ++k) edges.col(k) = (v.row(t(e, k + 1)) - v.row(t(e, 0))).transpose();
  return std::abs(edges.determinant()) / 6.0;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path.string());
  return in;
}

// Data lines with comments and blank lines stripped.
std::vector<std::string> data_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(line);
  }
  return out;
}

int parse_obj_index(const std::string& token, int count, int line_no, const char* what) {
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(token, &used);
  } catch (const std::exception&) {
    throw MeshError("line " + std::to_string(line_no) + ": bad " + what + " index '" + token + "'");
  }
  if (idx == 0) {
    throw MeshError("line " + std::to_string(line_no) + ": " + what +
                    " index 0 is invalid (OBJ indices are 1-based)");
  }
  const int zero_based = idx > 0 ? idx - 1 : count + idx;
  if (zero_based < 0 || zero_based >= count) {
    throw MeshError("line " + std::to_string(line_no) + ": " + what + " index " + token +
                    " out of range");
  }
  return zero_based;
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector2d> uvs;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<int, 3>> face_uvs;
  bool all_have_uv = true;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p = Eigen::Vector3d::Zero();
      if (!(ss >> p(0) >> p(1))) throw MeshError("line " + std::to_string(line_no) + ": bad vertex");
      double z;
      if (ss >> z) p(2) = z;
      verts.push_back(p);
    } else if (tag == "vt") {
      Eigen::Vector2d t;
      if (!(ss >> t(0) >> t(1))) throw MeshError("line " + std::to_string(line_no) + ": bad vt");
      uvs.push_back(t);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (tokens.size() != 3) {
        throw MeshError("line " + std::to_string(line_no) + ": only triangular faces are supported");
      }
      std::array<int, 3> f{};
      std::array<int, 3> ft{-1, -1, -1};
      for (int k = 0; k < 3; ++k) {
        const auto slash = tokens[k].find('/');
        f[k] = parse_obj_index(tokens[k].substr(0, slash), static_cast<int>(verts.size()), line_no,
                               "vertex");
        if (slash != std::string::npos) {
          const auto rest = tokens[k].substr(slash + 1);
          const auto slash2 = rest.find('/');
          const auto vt = rest.substr(0, slash2);
          if (!vt.empty()) {
            ft[k] = parse_obj_index(vt, static_cast<int>(uvs.size()), line_no, "texture");
          }
        }
        if (ft[k] < 0) all_have_uv = false;
      }
      faces.push_back(f);
      face_uvs.push_back(ft);
    }
  }

  Eigen::MatrixXd v(verts.size(), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) v.row(i) = verts[i].transpose();
  Eigen::MatrixXi t(faces.size(), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int k = 0; k < 3; ++k) t(i, k) = faces[i][k];
  Mesh mesh = make_mesh(std::move(v), std::move(t), 2);

  if (all_have_uv && !faces.empty() && !uvs.empty()) {
    std::vector<int> assigned(verts.size(), -1);
    bool consistent = true;
    for (std::size_t i = 0; i < faces.size() && consistent; ++i) {
      for (int k = 0; k < 3; ++k) {
        int& slot = assigned[faces[i][k]];
        if (slot < 0) {
          slot = face_uvs[i][k];
        } else if (slot != face_uvs[i][k] && uvs[slot] != uvs[face_uvs[i][k]]) {
          consistent = false;
        }
      }
    }
    if (consistent) {
      Eigen::MatrixXd tc = Eigen::MatrixXd::Zero(verts.size(), 2);
      for (std::size_t i = 0; i < verts.size(); ++i)
        if (assigned[i] >= 0) tc.row(i) = uvs[assigned[i]].transpose();
      mesh.texcoords = std::move(tc);
    }
  }
  return mesh;
}

Mesh load_off(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  const auto lines = data_lines(in);
  if (lines.empty()) throw MeshError(path.string() + ": empty file");
  std::size_t cursor = 0;
  std::istringstream header(lines[cursor]);
  std::string magic;
  header >> magic;
  if (magic.rfind("OFF", 0) != 0) throw MeshError(path.string() + ": missing OFF header");
  long nv = -1, nf = -1;
  if (!(header >> nv >> nf)) {
    ++cursor;
    if (cursor >= lines.size()) throw MeshError(path.string() + ": missing counts");
    std::istringstream counts(lines[cursor]);
    if (!(counts >> nv >> nf)) throw MeshError(path.string() + ": bad counts line");
  }
  ++cursor;
  if (nv < 0 || nf < 0 || cursor + nv + nf > lines.size()) {
    throw MeshError(path.string() + ": truncated file");
  }
  Eigen::MatrixXd v(nv, 3);
  for (long i = 0; i < nv; ++i) {
    std::istringstream ss(lines[cursor + i]);
    if (!(ss >> v(i, 0) >> v(i, 1) >> v(i, 2))) {
      throw MeshError(path.string() + ": bad vertex " + std::to_string(i));
    }
  }
  cursor += nv;
  Eigen::MatrixXi t(nf, 3);
  for (long i = 0; i < nf; ++i) {
    std::istringstream ss(lines[cursor + i]);
    int k = 0;
    if (!(ss >> k) || k != 3) throw MeshError(path.string() + ": face " + std::to_string(i) + " is not a triangle");
    if (!(ss >> t(i, 0) >> t(i, 1) >> t(i, 2))) {
      throw MeshError(path.string() + ": bad face " + std::to_string(i));
    }
  }
  return make_mesh(std::move(v), std::move(t), 2);
}

Mesh load_tet(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  const auto lines = data_lines(in);
  if (lines.empty()) throw MeshError(path.string() + ": empty file");
  std::istringstream header(lines[0]);
  long nv = -1, nt = -1;
  if (!(header >> nv >> nt) || nv < 0 || nt < 0) {
    throw MeshError(path.string() + ": expected '<#vertices> <#tets>' header");
  }
  if (1 + static_cast<std::size_t>(nv + nt) > lines.size()) throw MeshError(path.string() + ": truncated file");
  Eigen::MatrixXd v(nv, 3);
  for (long i = 0; i < nv; ++i) {
    std::istringstream ss(lines[1 + i]);
    if (!(ss >> v(i, 0) >> v(i, 1) >> v(i, 2))) {
      throw MeshError(path.string() + ": bad vertex " + std::to_string(i + 1));
    }
  }
  Eigen::MatrixXi t(nt, 4);
  for (long i = 0; i < nt; ++i) {
    std::istringstream ss(lines[1 + nv + i]);
    for (int k = 0; k < 4; ++k) {
      int idx = 0;
      if (!(ss >> idx)) throw MeshError(path.string() + ": bad tet " + std::to_string(i + 1));
      if (idx < 1 || idx > nv) {
        throw MeshError(path.string() + ": tet " + std::to_string(i + 1) + " index " +
                        std::to_string(idx) + " out of range (1-based)");
      }
      t(i, k) = idx - 1;
    }
  }
  return make_mesh(std::move(v), std::move(t), 3);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void write_position(std::ostream& out, const Eigen::MatrixXd& p, int i) {
  out << p(i, 0) << ' ' << p(i, 1) << ' ' << (p.cols() > 2 ? p(i, 2) : 0.0);
}

}  // namespace

double Mesh::bbox_diagonal() const {
  if (vertices.rows() == 0) return 0.0;
  return (vertices.colwise().maxCoeff() - vertices.colwise().minCoeff()).norm();
}

HandleConstraints::HandleConstraints(std::vector<Handle> handles) : handles_(std::move(handles)) {}

void HandleConstraints::validate(int num_vertices, int target_dim) const {
  std::set<int> seen;
  for (const Handle& h : handles_) {
    if (h.vertex < 0 || h.vertex >= num_vertices) {
      throw InvalidInput("handle vertex " + std::to_string(h.vertex) + " does not exist (mesh has " +
                         std::to_string(num_vertices) + " vertices)");
    }
    if (h.position.size() != target_dim) {
      throw InvalidInput("handle vertex " + std::to_string(h.vertex) + " has a " +
                         std::to_string(h.position.size()) + "-d position, expected " +
                         std::to_string(target_dim));
    }
    if (!h.position.allFinite()) {
      throw InvalidInput("handle vertex " + std::to_string(h.vertex) + " has a non-finite position");
    }
    if (!seen.insert(h.vertex).second) {
      throw InvalidInput("duplicate handle vertex " + std::to_string(h.vertex));
    }
  }
}

std::vector<int> HandleConstraints::vertex_ids() const {
  std::vector<int> ids;
  ids.reserve(handles_.size());
  for (const Handle& h : handles_) ids.push_back(h.vertex);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool HandleConstraints::same_vertices(const HandleConstraints& other) const {
  return vertex_ids() == other.vertex_ids();
}

Mesh make_mesh(Eigen::MatrixXd vertices, Eigen::MatrixXi elements, int dim) {
  if (dim != 2 && dim != 3) throw MeshError("element dimension must be 2 or 3");
  if (elements.cols() != dim + 1) {
    throw MeshError("elements must have " + std::to_string(dim + 1) + " vertices");
  }
  if (vertices.cols() < 2 || vertices.cols() > 3 || (dim == 3 && vertices.cols() != 3)) {
    throw MeshError("unsupported vertex dimension " + std::to_string(vertices.cols()));
  }
  if (elements.rows() == 0) throw MeshError("mesh has no elements");
  if (!vertices.allFinite()) throw MeshError("mesh has non-finite vertex coordinates");
  const long n = vertices.rows();
  for (long e = 0; e < elements.rows(); ++e) {
    for (long k = 0; k < elements.cols(); ++k) {
      if (elements(e, k) < 0 || elements(e, k) >= n) {
        throw MeshError("element " + std::to_string(e) + " references vertex " +
                        std::to_string(elements(e, k)) + " out of range [0, " + std::to_string(n) + ")");
      }
    }
  }
  if (dim == 2 && vertices.cols() == 3 && (vertices.col(2).array() == 0.0).all()) {
    vertices = Eigen::MatrixXd(vertices.leftCols(2));
  }

  Mesh mesh;
  mesh.dim = dim;
  mesh.embed_dim = static_cast<int>(vertices.cols());
  mesh.target_dim = dim;
  mesh.measures.resize(elements.rows());
  for (long e = 0; e < elements.rows(); ++e) {
    mesh.measures(e) = element_measure(vertices, elements, static_cast<int>(e), dim);
  }
  const double max_measure = mesh.measures.maxCoeff();
  for (long e = 0; e < elements.rows(); ++e) {
    if (!(mesh.measures(e) > kDegenerateRel * max_measure)) {
      throw MeshError("element " + std::to_string(e) + " is degenerate (measure " +
                      std::to_string(mesh.measures(e)) + ")");
    }
  }
  mesh.vertices = std::move(vertices);
  mesh.elements = std::move(elements);
  return mesh;
}

MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return MeshFormat::kObj;
  if (ext == ".off") return MeshFormat::kOff;
  if (ext == ".tet") return MeshFormat::kTet;
  throw MeshError("unrecognized mesh extension '" + ext + "' (expected .obj, .off or .tet)");
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  switch (format) {
    case MeshFormat::kObj:
      return load_obj(path);
    case MeshFormat::kOff:
      return load_off(path);
    case MeshFormat::kTet:
      return load_tet(path);
  }
  throw MeshError("unknown format");
}

Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

void save_obj_with_uv(const std::filesystem::path& path, const Mesh& mesh, const Eigen::MatrixXd& uv) {
  if (mesh.num_elements() == 0) throw MeshError("cannot save an empty mesh");
  if (mesh.dim != 2 || mesh.target_dim != 2) throw MeshError("UV output requires a triangle mesh");
  if (uv.rows() != mesh.num_vertices() || uv.cols() != 2) {
    throw MeshError("UV array must be n x 2");
  }
  std::ofstream out = open_output(path);
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    out << "v ";
    write_position(out, mesh.vertices, i);
    out << '\n';
  }
  for (int i = 0; i < mesh.num_vertices(); ++i) out << "vt " << uv(i, 0) << ' ' << uv(i, 1) << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << mesh.elements(e, k) + 1 << '/' << mesh.elements(e, k) + 1;
    out << '\n';
  }
  if (!out) throw MeshError("write failed: " + path.string());
}

void save_mesh(const std::filesystem::path& path, const Mesh& mesh, const Eigen::MatrixXd& positions,
               MeshFormat format) {
  if (mesh.num_elements() == 0) throw MeshError("cannot save an empty mesh");
  if (positions.rows() != mesh.num_vertices() || positions.cols() < 2 || positions.cols() > 3) {
    throw MeshError("positions must be n x 2 or n x 3");
  }
  std::ofstream out = open_output(path);
  const int n = mesh.num_vertices();
  const int m = mesh.num_elements();
  switch (format) {
    case MeshFormat::kObj:
      if (mesh.dim != 2) throw MeshError("OBJ output requires a triangle mesh");
      for (int i = 0; i < n; ++i) {
        out << "v ";
        write_position(out, positions, i);
        out << '\n';
      }
      for (int e = 0; e < m; ++e) {
        out << 'f';
        for (int k = 0; k < 3; ++k) out << ' ' << mesh.elements(e, k) + 1;
        out << '\n';
      }
      break;
    case MeshFormat::kOff:
      if (mesh.dim != 2) throw MeshError("OFF output requires a triangle mesh");
      out << "OFF\n" << n << ' ' << m << " 0\n";
      for (int i = 0; i < n; ++i) {
        write_position(out, positions, i);
        out << '\n';
      }
      for (int e = 0; e < m; ++e) {
        out << 3;
        for (int k = 0; k < 3; ++k) out << ' ' << mesh.elements(e, k);
        out << '\n';
      }
      break;
    case MeshFormat::kTet:
      if (mesh.dim != 3 || positions.cols() != 3) throw MeshError("tet output requires a tet mesh");
      out << n << ' ' << m << '\n';
      for (int i = 0; i < n; ++i) {
        write_position(out, positions, i);
        out << '\n';
      }
      for (int e = 0; e < m; ++e) {
        for (int k = 0; k < 4; ++k) out << (k ? " " : "") << mesh.elements(e, k) + 1;
        out << '\n';
      }
      break;
  }
  if (!out) throw MeshError("write failed: " + path.string());
}

std::vector<int> boundary_loop(const Mesh& mesh) {
  if (mesh.dim != 2) throw MeshError("boundary_loop requires a triangle mesh");
  std::map<std::pair<int, int>, int> undirected;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.elements(e, k);
      const int b = mesh.elements(e, (k + 1) % 3);
      ++undirected[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::map<int, int> next;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.elements(e, k);
      const int b = mesh.elements(e, (k + 1) % 3);
      if (undirected[{std::min(a, b), std::max(a, b)}] != 1) continue;
      if (!next.emplace(a, b).second) {
        throw MeshError("boundary is not manifold at vertex " + std::to_string(a));
      }
    }
  }
  if (next.empty()) throw MeshError("mesh has no boundary (closed surface)");

  std::vector<int> loop;
  std::set<int> visited;
  const int start = next.begin()->first;
  int v = start;
  do {
    loop.push_back(v);
    visited.insert(v);
    const auto it = next.find(v);
    if (it == next.end()) throw MeshError("boundary is not a closed loop at vertex " + std::to_string(v));
    v = it->second;
    if (v != start && visited.count(v)) {
      throw MeshError("boundary is not manifold at vertex " + std::to_string(v));
    }
  } while (v != start);
  if (loop.size() != next.size()) {
    throw MeshError("mesh has multiple boundary loops; only disk topology is supported");
  }
  return loop;
}

Eigen::MatrixXi boundary_surface(const Mesh& mesh) {
  if (mesh.dim != 3) throw MeshError("boundary_surface requires a tet mesh");
  struct FaceInfo {
    int count = 0;
    std::array<int, 3> face{};
    int opposite = -1;
  };
  static constexpr int kFaces[4][4] = {{1, 2, 3, 0}, {0, 3, 2, 1}, {0, 1, 3, 2}, {0, 2, 1, 3}};
  std::map<std::array<int, 3>, FaceInfo> faces;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (const auto& f : kFaces) {
      std::array<int, 3> tri{mesh.elements(e, f[0]), mesh.elements(e, f[1]), mesh.elements(e, f[2])};
      std::array<int, 3> key = tri;
      std::sort(key.begin(), key.end());
      FaceInfo& info = faces[key];
      ++info.count;
      info.face = tri;
      info.opposite = mesh.elements(e, f[3]);
    }
  }
  std::vector<std::array<int, 3>> out;
  for (const auto& [key, info] : faces) {
    if (info.count != 1) continue;
    std::array<int, 3> tri = info.face;
    const Eigen::Vector3d p = mesh.vertices.row(tri[0]).transpose();
    const Eigen::Vector3d q = mesh.vertices.row(tri[1]).transpose();
    const Eigen::Vector3d r = mesh.vertices.row(tri[2]).transpose();
    const Eigen::Vector3d o = mesh.vertices.row(info.opposite).transpose();
    if ((q - p).cross(r - p).dot(o - p) > 0.0) std::swap(tri[1], tri[2]);
    out.push_back(tri);
  }
  Eigen::MatrixXi result(out.size(), 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int k = 0; k < 3; ++k) result(i, k) = out[i][k];
  return result;
}

std::vector<int> boundary_vertices(const Mesh& mesh) {
  std::set<int> ids;
  if (mesh.dim == 2) {
    for (int v : boundary_loop(mesh)) ids.insert(v);
  } else {
    const Eigen::MatrixXi surf = boundary_surface(mesh);
    for (int i = 0; i < surf.size(); ++i) ids.insert(surf.data()[i]);
  }
  return {ids.begin(), ids.end()};
}

int connected_components(const Mesh& mesh, std::vector<int>& component) {
  const int n = mesh.num_vertices();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 1; k < mesh.elements.cols(); ++k) {
      const int a = find(mesh.elements(e, 0));
      const int b = find(mesh.elements(e, k));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  component.assign(n, -1);
  std::map<int, int> label;
  for (int v = 0; v < n; ++v) {
    const int root = find(v);
    const auto [it, inserted] = label.emplace(root, static_cast<int>(label.size()));
    component[v] = it->second;
  }
  return static_cast<int>(label.size());
}

}  // namespace flipfree
