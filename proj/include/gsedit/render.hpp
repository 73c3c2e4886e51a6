#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gsedit/scene.hpp"
#include "gsedit/tensor.hpp"

namespace gsedit {

/// A Gaussian projected onto an image plane.
struct Splat2D {
    std::size_t gaussian_index = 0;
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();  ///< pixels
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();  ///< pixels^2, includes the dilation
    double depth = 0.0;  ///< camera-frame z
};

struct RenderOptions {
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    int tile_size = 16;
    double transmittance_floor = 1e-4;
    double alpha_clamp = 0.99;
    double min_alpha = 1.0 / 255.0;
    double z_near = 0.01;
    double dilation = 0.3;  ///< low-pass term added to the 2D covariance diagonal
    bool record_contribs = false;
};

/// One composited sample of a Gaussian at a pixel.
struct PixelContribution {
    int pixel = 0;  ///< y * width + x
    double alpha = 0.0;
    double transmittance = 0.0;  ///< product of (1 - alpha) of everything in front
};

struct RenderOutput {
    Image rgb;
    Image depth;  ///< alpha-weighted mean z; +inf where nothing was composited
    Image alpha;
    /// Indexed by Gaussian; empty unless `record_contribs` was set. Within a
    /// Gaussian, records are ordered tile-major then pixel-major.
    std::vector<std::vector<PixelContribution>> contribs;
};

/// Gradients with respect to the cloud's stored parameters.
struct ParamGrads {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector4d> rotations;
    std::vector<Eigen::Vector3d> log_scales;
    std::vector<Eigen::Vector3d> colors;
    std::vector<double> opacity_logits;
    /// Norm of dL/d(mean2d) for each Gaussian, zero when not visible.
    std::vector<double> mean2d_grad_norm;
    /// True when the Gaussian projected with a nonempty footprint.
    std::vector<bool> visible;

    explicit ParamGrads(std::size_t n = 0);
    std::size_t size() const { return positions.size(); }
};

/// 2x3 Jacobian of the pinhole projection at camera-frame point `p`.
Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraView& camera, const Eigen::Vector3d& p);

/// World covariance R S S^T R^T of Gaussian `index`.
Eigen::Matrix3d world_covariance(const GaussianCloud& cloud, std::size_t index);

/// Projects one Gaussian; nothing when the center is at or in front of the
/// near plane.
std::optional<Splat2D> project_gaussian(const GaussianCloud& cloud, std::size_t index, const CameraView& camera,
                                        const RenderOptions& opts = {});

/// Tile-based front-to-back alpha compositing of degree-0 colors.
RenderOutput render(const GaussianCloud& cloud, const CameraView& camera, const RenderOptions& opts = {});

/// Analytic adjoint of `render` for a loss whose gradient with respect to the
/// rendered rgb is `upstream_rgb_grad` (H x W x 3). Frozen Gaussians get
/// exactly zero gradients.
ParamGrads render_backward(const GaussianCloud& cloud, const CameraView& camera, const Image& upstream_rgb_grad,
                           const RenderOptions& opts = {});

}  // namespace gsedit
