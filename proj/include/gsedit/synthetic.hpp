#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsedit/scene.hpp"

namespace gsedit {

enum class ColorScheme { Random, Uniform, Gradient };

ColorScheme parse_color_scheme(const std::string& name);

/// Parameters of a procedurally generated test scene.
struct SyntheticSpec {
    std::size_t count = 100;
    double extent = 1.0;  ///< side length of the cube holding Gaussian centers
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    ColorScheme colors = ColorScheme::Random;
    std::size_t camera_count = 8;
    double orbit_radius = 4.0;
    double elevation = 0.3;  ///< radians above the orbit plane
    int width = 64;
    int height = 64;
    double fov_y = 0.8;  ///< vertical field of view, radians
    double min_scale = 0.03;  ///< fraction of extent
    double max_scale = 0.08;
    double min_opacity = 0.5;
    double max_opacity = 0.95;
    std::uint64_t seed = 0;
};

/// Camera at `eye` looking at `target`, image y axis pointing down and world
/// +y treated as up.
CameraView look_at_camera(std::string id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target, int width,
                          int height, double focal);

/// Deterministic scene: Gaussians uniform in a cube, cameras evenly spaced on
/// a circular orbit of `orbit_radius` around the centroid of the Gaussian
/// centers. Every stored parameter is exactly representable as float32 so the
/// cloud survives a PLY round trip bit-exactly.
std::pair<GaussianCloud, std::vector<CameraView>> make_synthetic_scene(const SyntheticSpec& spec);

}  // namespace gsedit
