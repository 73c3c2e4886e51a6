#include "gsedit/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

/// Rounds through float32. The volatile store stops GCC 11's -O3 vectorizer
/// from folding the round trip away.
double f32(double v) {
    volatile float f = static_cast<float>(v);
    return f;
}

Eigen::Vector3d f32(const Eigen::Vector3d& v) { return {f32(v.x()), f32(v.y()), f32(v.z())}; }

}  // namespace

ColorScheme parse_color_scheme(const std::string& name) {
    if (name == "random") return ColorScheme::Random;
    if (name == "uniform") return ColorScheme::Uniform;
    if (name == "gradient") return ColorScheme::Gradient;
    throw ValidationError("unknown color scheme '" + name + "' (expected random, uniform or gradient)");
}

CameraView look_at_camera(std::string id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target, int width,
                          int height, double focal) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up = Eigen::Vector3d::UnitY();
    if (std::abs(forward.dot(up)) > 0.999) up = Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);

    CameraView cam;
    cam.id = std::move(id);
    cam.width = width;
    cam.height = height;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    return cam;
}

std::pair<GaussianCloud, std::vector<CameraView>> make_synthetic_scene(const SyntheticSpec& spec) {
    if (spec.camera_count == 0) throw ValidationError("synthetic scene needs at least one camera");
    if (!(spec.extent > 0.0)) throw ValidationError("synthetic scene extent must be positive");
    if (!(spec.orbit_radius > 0.0)) throw ValidationError("orbit radius must be positive");
    if (spec.width < 1 || spec.height < 1) throw ValidationError("image size must be at least 1x1");
    if (!(spec.min_scale > 0.0) || spec.max_scale < spec.min_scale) throw ValidationError("invalid scale range");
    if (!(spec.min_opacity > 0.0) || !(spec.max_opacity < 1.0) || spec.max_opacity < spec.min_opacity) {
        throw ValidationError("invalid opacity range");
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    GaussianCloud cloud;
    const double half = 0.5 * spec.extent;
    for (std::size_t i = 0; i < spec.count; ++i) {
        const Eigen::Vector3d offset(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
        const Eigen::Vector3d position = f32(spec.center + 2.0 * half * offset);

        Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        for (int k = 0; k < 4; ++k) q[k] = f32(q[k]);

        Eigen::Vector3d log_scale;
        for (int k = 0; k < 3; ++k) {
            const double s = spec.min_scale + (spec.max_scale - spec.min_scale) * unit(rng);
            log_scale[k] = f32(std::log(s * spec.extent));
        }

        Eigen::Vector3d rgb;
        switch (spec.colors) {
            case ColorScheme::Random: rgb = Eigen::Vector3d(unit(rng), unit(rng), unit(rng)); break;
            case ColorScheme::Uniform: rgb = Eigen::Vector3d(0.6, 0.6, 0.6); break;
            case ColorScheme::Gradient: rgb = (offset.array() + 0.5).matrix(); break;
        }
        const Eigen::Vector3d sh = f32(((rgb.array() - 0.5) / kShC0).matrix());

        const double opacity = spec.min_opacity + (spec.max_opacity - spec.min_opacity) * unit(rng);
        cloud.push_back(position, q, log_scale, sh, f32(logit(opacity)));
    }

    Eigen::Vector3d centroid = spec.center;
    if (!cloud.empty()) {
        centroid.setZero();
        for (const auto& p : cloud.positions) centroid += p;
        centroid /= static_cast<double>(cloud.size());
    }

    const double focal = 0.5 * spec.height / std::tan(0.5 * spec.fov_y);
    std::vector<CameraView> cameras;
    for (std::size_t i = 0; i < spec.camera_count; ++i) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(spec.camera_count);
        const Eigen::Vector3d dir(std::cos(spec.elevation) * std::sin(theta), std::sin(spec.elevation),
                                  -std::cos(spec.elevation) * std::cos(theta));
        const Eigen::Vector3d eye = centroid + spec.orbit_radius * dir;
        char id[32];
        std::snprintf(id, sizeof(id), "cam%03zu", i);
        cameras.push_back(look_at_camera(id, eye, centroid, spec.width, spec.height, focal));
    }
    return {std::move(cloud), std::move(cameras)};
}

}  // namespace gsedit
