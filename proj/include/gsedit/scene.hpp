#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsedit/tensor.hpp"

namespace gsedit {

/// Degree-0 spherical harmonic basis constant. Rendered color is
/// 0.5 + kShC0 * f_dc.
inline constexpr double kShC0 = 0.28209479177387814;

/// Scalar type of an opaque PLY property carried through load/save.
enum class PlyScalar : std::uint8_t { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::size_t ply_scalar_size(PlyScalar type);

struct PlyProperty {
    std::string name;
    PlyScalar type = PlyScalar::Float32;

    friend bool operator==(const PlyProperty&, const PlyProperty&) = default;
};

/// Per-vertex bytes of properties the library does not interpret (for example
/// higher-order SH `f_rest_*`). Rows follow Gaussians through every subset,
/// append and reorder so files round-trip verbatim.
struct OpaquePayload {
    std::vector<PlyProperty> properties;
    std::vector<std::uint8_t> bytes;

    std::size_t stride() const;
    bool empty() const { return properties.empty(); }

    friend bool operator==(const OpaquePayload&, const OpaquePayload&) = default;
};

/// Struct-of-arrays storage for a set of 3D Gaussians.
///
/// Parameters live in their unconstrained spaces:
///   - rotations:      quaternion (w, x, y, z), kept at unit norm
///   - log_scales:     exp() gives the per-axis standard deviation
///   - colors:         degree-0 SH coefficients
///   - opacity_logits: sigmoid() gives opacity in (0, 1)
struct GaussianCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector4d> rotations;
    std::vector<Eigen::Vector3d> log_scales;
    std::vector<Eigen::Vector3d> colors;
    std::vector<double> opacity_logits;
    std::optional<std::vector<double>> attention_weights;
    std::optional<std::vector<bool>> frozen;
    OpaquePayload extra;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }

    /// Appends one Gaussian; optional arrays and payload rows are extended
    /// with neutral values (weight 0, not frozen, zero bytes).
    void push_back(const Eigen::Vector3d& position, const Eigen::Vector4d& rotation,
                   const Eigen::Vector3d& log_scale, const Eigen::Vector3d& color, double opacity_logit);

    /// Appends a copy of row `index` of `source` (including optional fields).
    void append_row(const GaussianCloud& source, std::size_t index);

    bool is_frozen(std::size_t i) const { return frozen && (*frozen)[i]; }
    double opacity(std::size_t i) const;
    Eigen::Vector3d rgb(std::size_t i) const;

    /// Throws DataError when any invariant is violated.
    void validate() const;

    friend bool operator==(const GaussianCloud&, const GaussianCloud&) = default;
};

/// Copy of `cloud` restricted to `indices` (in the given order).
GaussianCloud select_rows(const GaussianCloud& cloud, std::span<const std::size_t> indices);

/// Pinhole camera with a world-to-camera rigid transform. The camera looks
/// down +z; x_cam = R * X + t and pixel = (fx * x / z + cx, fy * y / z + cy).
/// Pixel (u, v) has its center at integer coordinates.
struct CameraView {
    std::string id;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
    /// Optical axis in world coordinates.
    Eigen::Vector3d forward() const { return rotation.row(2).transpose(); }

    Eigen::Vector3d world_to_camera(const Eigen::Vector3d& x) const { return rotation * x + translation; }
    Eigen::Vector3d camera_to_world(const Eigen::Vector3d& x) const {
        return rotation.transpose() * (x - translation);
    }

    /// Throws ValidationError on a non-orthonormal or reflecting rotation,
    /// nonpositive focal lengths or empty image size.
    void validate(double tolerance = 1e-6) const;

    friend bool operator==(const CameraView&, const CameraView&) = default;
};

/// Image-space data for one view.
struct ViewBundle {
    std::string camera_id;
    Image rgb;
    std::optional<Image> depth;
    std::optional<Mask> mask;
    std::optional<double> score;

    void validate_against(const CameraView& camera) const;
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);

/// Radius around the camera-center mean used to scale position learning
/// rates and densification thresholds (1.1 x max distance to the mean).
double scene_extent(std::span<const CameraView> cameras);

const CameraView& find_camera(std::span<const CameraView> cameras, const std::string& id);

}  // namespace gsedit
