#include "flipfree/handles_json.hpp"

#include <fstream>
#include <iomanip>
#include <string>

namespace flipfree {

HandleConstraints handles_from_json(const nlohmann::json& j, int num_vertices, int target_dim) {
  if (!j.is_array()) throw InvalidInput("handles must be a JSON array");
  std::vector<Handle> handles;
  handles.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    const nlohmann::json& e = j[k];
    const std::string where = "handle " + std::to_string(k);
    if (!e.is_object() || !e.contains("vertex") || !e.contains("position")) {
      throw InvalidInput(where + ": expected {\"vertex\": int, \"position\": [...]}");
    }
    if (!e["vertex"].is_number_integer()) throw InvalidInput(where + ": vertex must be an integer");
    const nlohmann::json& pos = e["position"];
    if (!pos.is_array()) throw InvalidInput(where + ": position must be an array");
    const long long id = e["vertex"].get<long long>();
    if (id < 0 || id >= num_vertices) {
      throw InvalidInput(where + ": vertex " + std::to_string(id) + " is out of range [0, " +
                         std::to_string(num_vertices) + ")");
    }
    Handle h;
    h.vertex = static_cast<int>(id);
    h.position.resize(static_cast<Eigen::Index>(pos.size()));
    for (std::size_t c = 0; c < pos.size(); ++c) {
      if (!pos[c].is_number()) throw InvalidInput(where + ": position entries must be numbers");
      h.position(static_cast<Eigen::Index>(c)) = pos[c].get<double>();
    }
    if (!h.position.allFinite()) throw InvalidInput(where + ": position is not finite");
    handles.push_back(std::move(h));
  }
  HandleConstraints out(std::move(handles));
  out.validate(num_vertices, target_dim);
  return out;
}

HandleConstraints load_handles(const std::filesystem::path& path, int num_vertices, int target_dim) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open handles file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return handles_from_json(j, num_vertices, target_dim);
}

nlohmann::json handles_to_json(const HandleConstraints& handles) {
  nlohmann::json out = nlohmann::json::array();
  for (const Handle& h : handles.handles()) {
    nlohmann::json pos = nlohmann::json::array();
    for (Eigen::Index c = 0; c < h.position.size(); ++c) pos.push_back(h.position(c));
    out.push_back({{"vertex", h.vertex}, {"position", pos}});
  }
  return out;
}

void save_handles(const std::filesystem::path& path, const HandleConstraints& handles) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << handles_to_json(handles).dump(1) << '\n';
}

}  // namespace flipfree
