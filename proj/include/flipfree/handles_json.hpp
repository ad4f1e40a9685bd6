#pragma once

// Handle lists as JSON: [{"vertex": int, "position": [x, y(, z)]}, ...].

#include "flipfree/mesh.hpp"

#include <json.hpp>

#include <filesystem>

namespace flipfree {

/// Parses and validates against the mesh size and target dimension. Throws
/// InvalidInput naming the offending entry.
HandleConstraints handles_from_json(const nlohmann::json& j, int num_vertices, int target_dim);

HandleConstraints load_handles(const std::filesystem::path& path, int num_vertices, int target_dim);

nlohmann::json handles_to_json(const HandleConstraints& handles);

void save_handles(const std::filesystem::path& path, const HandleConstraints& handles);

}  // namespace flipfree
