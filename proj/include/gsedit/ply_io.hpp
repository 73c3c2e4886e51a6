#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "gsedit/scene.hpp"

namespace gsedit {

/// Reads a binary little-endian Gaussian PLY (x, y, z, f_dc_0..2, opacity,
/// scale_0..2, rot_0..3 required; normals dropped; any other vertex property
/// kept as opaque payload). Sidecars next to the file are loaded when present.
GaussianCloud load_ply(const std::filesystem::path& path);

/// Writes the cloud in the same layout with float32 required properties.
/// Attention weights and freeze flags go to sidecars so the main file stays
/// readable by standard viewers; stale sidecars are removed.
void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path);

/// `<dir>/<stem>.weights.f32` for `<dir>/<stem>.ply`.
std::filesystem::path weights_sidecar_path(const std::filesystem::path& ply_path);
/// `<dir>/<stem>.frozen.u8` for `<dir>/<stem>.ply`.
std::filesystem::path frozen_sidecar_path(const std::filesystem::path& ply_path);

/// Sidecar layout: 8-byte magic, little-endian u64 count, then `count`
/// little-endian float32 values.
void write_weights_sidecar(const std::filesystem::path& path, const std::vector<double>& weights);
std::vector<double> read_weights_sidecar(const std::filesystem::path& path);

/// Same framing as the weights sidecar with its own magic and one byte
/// (0 or 1) per Gaussian.
void write_frozen_sidecar(const std::filesystem::path& path, const std::vector<bool>& frozen);
std::vector<bool> read_frozen_sidecar(const std::filesystem::path& path);

}  // namespace gsedit
