// Writes the checked-in fixture files under data/ from the in-code fixtures.
// Usage: generate_fixture_data <output dir>

#include "fixtures.hpp"
#include "flipfree/energies.hpp"
#include "flipfree/handles_json.hpp"

#include <filesystem>
#include <iostream>

using namespace flipfree;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: generate_fixture_data <output dir>\n";
    return 1;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  const Mesh hemi = fixtures::hemisphere();
  save_mesh(dir / "hemisphere.obj", hemi, hemi.vertices, MeshFormat::kObj);
  const Eigen::MatrixXd uv = tutte_init(hemi);
  save_obj_with_uv(dir / "hemisphere_reflected_uv.obj", hemi, fixtures::reflect_patch(uv, {0.5, 0.0}, 0.35));
  save_obj_with_uv(dir / "hemisphere_tutte_uv.obj", hemi, uv);
  Eigen::MatrixXd mirrored = uv;
  mirrored.col(0) *= -1.0;
  save_obj_with_uv(dir / "hemisphere_mirrored_uv.obj", hemi, mirrored);

  const Mesh disk = fixtures::irregular_disk();
  save_mesh(dir / "irregular_disk.obj", disk, disk.vertices, MeshFormat::kObj);

  const Mesh grid = fixtures::grid(20);
  save_mesh(dir / "grid20.obj", grid, grid.vertices, MeshFormat::kObj);

  const Mesh bar = fixtures::bar();
  save_mesh(dir / "bar.obj", bar, bar.vertices, MeshFormat::kObj);
  // Left end pinned at rest, right end shifted up by 10% of the bbox diagonal.
  std::vector<Handle> handles;
  const double shift = 0.1 * bar.bbox_diagonal();
  const double x_max = bar.vertices.col(0).maxCoeff();
  for (int v = 0; v < bar.num_vertices(); ++v) {
    const double x = bar.vertices(v, 0);
    if (x == 0.0) handles.push_back({v, bar.vertices.row(v).transpose()});
    if (x == x_max) handles.push_back({v, bar.vertices.row(v).transpose() + Eigen::Vector2d(0.0, shift)});
  }
  save_handles(dir / "bar_handles.json", HandleConstraints(handles));

  const Mesh oct = fixtures::octahedron();
  save_mesh(dir / "octahedron.off", oct, oct.vertices, MeshFormat::kOff);

  const Mesh cube = fixtures::cube_tets(5);
  save_mesh(dir / "cube5.tet", cube, cube.vertices, MeshFormat::kTet);
  save_handles(dir / "cube5_twist30.json", fixtures::twisted_boundary(cube, 30.0));
  std::vector<Handle> rest;
  for (int v : boundary_vertices(cube)) rest.push_back({v, cube.vertices.row(v).transpose()});
  save_handles(dir / "cube5_identity.json", HandleConstraints(rest));
  return 0;
}
