#include "gsedit/scene.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "gsedit/error.hpp"

namespace gsedit {

std::size_t ply_scalar_size(PlyScalar type) {
    switch (type) {
        case PlyScalar::Int8:
        case PlyScalar::UInt8: return 1;
        case PlyScalar::Int16:
        case PlyScalar::UInt16: return 2;
        case PlyScalar::Int32:
        case PlyScalar::UInt32:
        case PlyScalar::Float32: return 4;
        case PlyScalar::Float64: return 8;
    }
    return 0;
}

std::size_t OpaquePayload::stride() const {
    std::size_t s = 0;
    for (const auto& p : properties) s += ply_scalar_size(p.type);
    return s;
}

void GaussianCloud::push_back(const Eigen::Vector3d& position, const Eigen::Vector4d& rotation,
                              const Eigen::Vector3d& log_scale, const Eigen::Vector3d& color,
                              double opacity_logit) {
    positions.push_back(position);
    rotations.push_back(rotation);
    log_scales.push_back(log_scale);
    colors.push_back(color);
    opacity_logits.push_back(opacity_logit);
    if (attention_weights) attention_weights->push_back(0.0);
    if (frozen) frozen->push_back(false);
    if (!extra.empty()) extra.bytes.resize(extra.bytes.size() + extra.stride(), 0);
}

void GaussianCloud::append_row(const GaussianCloud& source, std::size_t index) {
    positions.push_back(source.positions[index]);
    rotations.push_back(source.rotations[index]);
    log_scales.push_back(source.log_scales[index]);
    colors.push_back(source.colors[index]);
    opacity_logits.push_back(source.opacity_logits[index]);
    if (attention_weights) {
        attention_weights->push_back(source.attention_weights ? (*source.attention_weights)[index] : 0.0);
    }
    if (frozen) frozen->push_back(source.is_frozen(index));
    if (!extra.empty()) {
        const std::size_t stride = extra.stride();
        if (source.extra.properties == extra.properties) {
            const auto first = source.extra.bytes.begin() + static_cast<std::ptrdiff_t>(index * stride);
            extra.bytes.insert(extra.bytes.end(), first, first + static_cast<std::ptrdiff_t>(stride));
        } else {
            extra.bytes.resize(extra.bytes.size() + stride, 0);
        }
    }
}

double GaussianCloud::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

Eigen::Vector3d GaussianCloud::rgb(std::size_t i) const {
    return (colors[i] * kShC0).array() + 0.5;
}

void GaussianCloud::validate() const {
    const std::size_t n = size();
    if (rotations.size() != n || log_scales.size() != n || colors.size() != n || opacity_logits.size() != n) {
        throw DataError("gaussian cloud arrays have inconsistent lengths");
    }
    if (attention_weights && attention_weights->size() != n) {
        throw DataError("attention weight array length does not match gaussian count");
    }
    if (frozen && frozen->size() != n) throw DataError("freeze mask length does not match gaussian count");
    if (!extra.empty() && extra.bytes.size() != n * extra.stride()) {
        throw DataError("opaque payload size does not match gaussian count");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto fail = [i](const std::string& what) {
            throw DataError("gaussian " + std::to_string(i) + ": " + what);
        };
        if (!positions[i].allFinite()) fail("non-finite position");
        if (!colors[i].allFinite()) fail("non-finite color");
        if (!rotations[i].allFinite() || std::abs(rotations[i].norm() - 1.0) > 1e-6) {
            fail("rotation quaternion is not unit norm");
        }
        const Eigen::Vector3d s = log_scales[i].array().exp();
        if (!s.allFinite() || (s.array() <= 0.0).any()) fail("scale is not strictly positive and finite");
        const double o = sigmoid(opacity_logits[i]);
        if (!std::isfinite(opacity_logits[i]) || !(o > 0.0 && o < 1.0)) fail("opacity outside (0, 1)");
        if (attention_weights) {
            const double w = (*attention_weights)[i];
            if (!(w >= 0.0 && w <= 1.0)) fail("attention weight outside [0, 1]");
        }
    }
}

GaussianCloud select_rows(const GaussianCloud& cloud, std::span<const std::size_t> indices) {
    GaussianCloud out;
    out.extra.properties = cloud.extra.properties;
    if (cloud.attention_weights) out.attention_weights.emplace();
    if (cloud.frozen) out.frozen.emplace();
    out.positions.reserve(indices.size());
    for (std::size_t i : indices) out.append_row(cloud, i);
    return out;
}

void CameraView::validate(double tolerance) const {
    const auto fail = [this](const std::string& what) {
        throw ValidationError("camera '" + id + "': " + what);
    };
    if (!(fx > 0.0) || !(fy > 0.0)) fail("focal lengths must be positive");
    if (width < 1 || height < 1) fail("image size must be at least 1x1");
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
        fail("non-finite parameters");
    }
    const double ortho = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tolerance) fail("rotation is not orthonormal");
    if (rotation.determinant() < 0.0) fail("rotation is a reflection (determinant -1)");
}

void ViewBundle::validate_against(const CameraView& camera) const {
    const auto fail = [this](const std::string& what) {
        throw ContractError("view '" + camera_id + "': " + what);
    };
    if (rgb.height() != camera.height || rgb.width() != camera.width || rgb.channels() != 3) {
        fail("rgb image does not match camera resolution");
    }
    if (depth) {
        if (depth->height() != camera.height || depth->width() != camera.width || depth->channels() != 1) {
            fail("depth map does not match camera resolution");
        }
        for (double d : depth->values()) {
            if (std::isfinite(d) && d <= 0.0) fail("depth values must be positive where finite");
        }
    }
    if (mask && (mask->height != camera.height || mask->width != camera.width)) {
        fail("mask does not match camera resolution");
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
    const Eigen::Vector4d n = q / q.norm();
    const double w = n[0], x = n[1], y = n[2], z = n[3];
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

double scene_extent(std::span<const CameraView> cameras) {
    if (cameras.empty()) return 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& c : cameras) mean += c.center();
    mean /= static_cast<double>(cameras.size());
    double radius = 0.0;
    for (const auto& c : cameras) radius = std::max(radius, (c.center() - mean).norm());
    return radius > 0.0 ? 1.1 * radius : 1.0;
}

const CameraView& find_camera(std::span<const CameraView> cameras, const std::string& id) {
    const auto it = std::find_if(cameras.begin(), cameras.end(), [&](const CameraView& c) { return c.id == id; });
    if (it == cameras.end()) throw ContractError("no camera with id '" + id + "'");
    return *it;
}

}  // namespace gsedit
