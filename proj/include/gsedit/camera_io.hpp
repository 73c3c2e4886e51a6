#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gsedit/scene.hpp"

namespace gsedit {

/// Reads a JSON array of cameras:
///   {"id", "width", "height", "fx", "fy", "cx", "cy",
///    "rotation": [9 numbers, row-major world-to-camera], "translation": [3]}
/// Rotations within 1e-4 of orthonormal are accepted; those off by more than
/// 1e-6 are projected back onto SO(3).
std::vector<CameraView> load_cameras(const std::filesystem::path& path);
std::vector<CameraView> cameras_from_json(const nlohmann::json& doc);

void save_cameras(const std::vector<CameraView>& cameras, const std::filesystem::path& path);
nlohmann::json cameras_to_json(const std::vector<CameraView>& cameras);

}  // namespace gsedit
