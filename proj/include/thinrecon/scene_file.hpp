#pragma once

#include <filesystem>

#include "json.hpp"

#include "thinrecon/colmap_model.hpp"

namespace thinrecon {

// scene.json: a normalized SceneModel. Keys are emitted in sorted order and
// doubles with round-trip precision, so save -> load is exact.
nlohmann::json scene_to_json(const SceneModel& model);
SceneModel scene_from_json(const nlohmann::json& j);

void save_scene(const std::filesystem::path& path, const SceneModel& model);
SceneModel load_scene(const std::filesystem::path& path);

}  // namespace thinrecon
