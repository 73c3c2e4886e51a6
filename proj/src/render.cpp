#include "gsedit/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

/// Projected Gaussian plus everything the compositor and its adjoint need.
struct PreparedSplat {
    std::size_t gaussian = 0;
    Eigen::Vector3d p_cam;
    Eigen::Vector2d mean;
    Eigen::Matrix2d conic;
    Eigen::Matrix<double, 2, 3> jacobian;
    Eigen::Matrix3d sigma;
    double depth = 0.0;
    double opacity = 0.0;
    Eigen::Vector3d rgb;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  ///< inclusive pixel bounds of the footprint
};

struct Frame {
    std::vector<PreparedSplat> splats;
    std::vector<std::vector<int>> tiles;  ///< per tile, splat ids sorted front to back
    int tiles_x = 0;
    int tiles_y = 0;
};

Frame prepare(const GaussianCloud& cloud, const CameraView& camera, const RenderOptions& opts) {
    if (opts.tile_size < 1) throw ContractError("tile size must be positive");
    Frame frame;
    const int W = camera.width;
    const int H = camera.height;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Eigen::Vector3d p = camera.world_to_camera(cloud.positions[i]);
        if (!(p.z() > opts.z_near)) continue;
        PreparedSplat s;
        s.gaussian = i;
        s.p_cam = p;
        s.depth = p.z();
        s.mean = Eigen::Vector2d(camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy);
        s.jacobian = projection_jacobian(camera, p);
        s.sigma = world_covariance(cloud, i);
        const Eigen::Matrix<double, 2, 3> A = s.jacobian * camera.rotation;
        Eigen::Matrix2d cov = A * s.sigma * A.transpose();
        cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
        cov += opts.dilation * Eigen::Matrix2d::Identity();
        const double det = cov.determinant();
        if (!(det > 0.0)) continue;
        s.conic = cov.inverse();
        s.opacity = cloud.opacity(i);
        s.rgb = cloud.rgb(i);

        // Outside radius r the kernel is below min_alpha / opacity for every pixel.
        const double ratio = s.opacity / opts.min_alpha;
        if (ratio < 1.0) continue;
        const double half = 0.5 * (cov(0, 0) + cov(1, 1));
        const double lambda_max = half + std::sqrt(std::max(0.0, half * half - det));
        const double r = std::sqrt(2.0 * lambda_max * std::log(ratio)) * (1.0 + 1e-9) + 1e-6;
        s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean.x() - r)));
        s.x1 = std::min(W - 1, static_cast<int>(std::floor(s.mean.x() + r)));
        s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y() - r)));
        s.y1 = std::min(H - 1, static_cast<int>(std::floor(s.mean.y() + r)));
        if (!std::isfinite(s.mean.x()) || !std::isfinite(s.mean.y()) || s.x0 > s.x1 || s.y0 > s.y1) continue;
        frame.splats.push_back(s);
    }

    frame.tiles_x = (W + opts.tile_size - 1) / opts.tile_size;
    frame.tiles_y = (H + opts.tile_size - 1) / opts.tile_size;
    frame.tiles.assign(static_cast<std::size_t>(frame.tiles_x) * frame.tiles_y, {});
    std::vector<int> order(frame.splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& sa = frame.splats[static_cast<std::size_t>(a)];
        const auto& sb = frame.splats[static_cast<std::size_t>(b)];
        if (sa.depth != sb.depth) return sa.depth < sb.depth;
        return sa.gaussian < sb.gaussian;
    });
    for (int id : order) {
        const auto& s = frame.splats[static_cast<std::size_t>(id)];
        for (int ty = s.y0 / opts.tile_size; ty <= s.y1 / opts.tile_size; ++ty) {
            for (int tx = s.x0 / opts.tile_size; tx <= s.x1 / opts.tile_size; ++tx) {
                frame.tiles[static_cast<std::size_t>(ty) * frame.tiles_x + tx].push_back(id);
            }
        }
    }
    return frame;
}

struct Sample {
    int splat = 0;
    double alpha = 0.0;
    double transmittance = 0.0;
    double kernel = 0.0;  ///< exp(power)
    bool clamped = false;
    Eigen::Vector2d offset;
};

/// Front-to-back traversal of one pixel. Calls `visit(sample)` for every
/// composited sample and returns the final transmittance.
template <typename Visit>
double composite_pixel(const Frame& frame, const std::vector<int>& tile, int x, int y, const RenderOptions& opts,
                       Visit&& visit) {
    double T = 1.0;
    for (int id : tile) {
        const auto& s = frame.splats[static_cast<std::size_t>(id)];
        if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
        const Eigen::Vector2d d(x - s.mean.x(), y - s.mean.y());
        const double power = -0.5 * (s.conic(0, 0) * d.x() * d.x() + 2.0 * s.conic(0, 1) * d.x() * d.y() +
                                     s.conic(1, 1) * d.y() * d.y());
        const double kernel = std::exp(power);
        const double raw = s.opacity * kernel;
        const bool clamped = raw > opts.alpha_clamp;
        const double alpha = clamped ? opts.alpha_clamp : raw;
        if (alpha < opts.min_alpha) continue;
        const double next_T = T * (1.0 - alpha);
        if (next_T < opts.transmittance_floor) break;
        visit(Sample{id, alpha, T, kernel, clamped, d});
        T = next_T;
    }
    return T;
}

template <typename PerPixel>
void for_each_pixel(const Frame& frame, const CameraView& camera, const RenderOptions& opts, PerPixel&& per_pixel) {
    for (int ty = 0; ty < frame.tiles_y; ++ty) {
        for (int tx = 0; tx < frame.tiles_x; ++tx) {
            const auto& tile = frame.tiles[static_cast<std::size_t>(ty) * frame.tiles_x + tx];
            const int y_end = std::min(camera.height, (ty + 1) * opts.tile_size);
            const int x_end = std::min(camera.width, (tx + 1) * opts.tile_size);
            for (int y = ty * opts.tile_size; y < y_end; ++y) {
                for (int x = tx * opts.tile_size; x < x_end; ++x) per_pixel(tile, x, y);
            }
        }
    }
}

/// d R(q_hat) / d q_hat contracted with dL/dR, q_hat = (w, x, y, z).
Eigen::Vector4d rotation_adjoint(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Vector4d out;
    out[0] = 2.0 * (z * (g(1, 0) - g(0, 1)) + y * (g(0, 2) - g(2, 0)) + x * (g(2, 1) - g(1, 2)));
    out[1] = 2.0 * (y * (g(0, 1) + g(1, 0)) + z * (g(0, 2) + g(2, 0)) + w * (g(2, 1) - g(1, 2))) -
             4.0 * x * (g(1, 1) + g(2, 2));
    out[2] = 2.0 * (x * (g(0, 1) + g(1, 0)) + w * (g(0, 2) - g(2, 0)) + z * (g(1, 2) + g(2, 1))) -
             4.0 * y * (g(0, 0) + g(2, 2));
    out[3] = 2.0 * (w * (g(1, 0) - g(0, 1)) + x * (g(0, 2) + g(2, 0)) + y * (g(1, 2) + g(2, 1))) -
             4.0 * z * (g(0, 0) + g(1, 1));
    return out;
}

}  // namespace

ParamGrads::ParamGrads(std::size_t n)
    : positions(n, Eigen::Vector3d::Zero()),
      rotations(n, Eigen::Vector4d::Zero()),
      log_scales(n, Eigen::Vector3d::Zero()),
      colors(n, Eigen::Vector3d::Zero()),
      opacity_logits(n, 0.0),
      mean2d_grad_norm(n, 0.0),
      visible(n, false) {}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraView& camera, const Eigen::Vector3d& p) {
    const double inv_z = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> J;
    J << camera.fx * inv_z, 0.0, -camera.fx * p.x() * inv_z * inv_z,
        0.0, camera.fy * inv_z, -camera.fy * p.y() * inv_z * inv_z;
    return J;
}

Eigen::Matrix3d world_covariance(const GaussianCloud& cloud, std::size_t index) {
    const Eigen::Matrix3d R = quaternion_to_matrix(cloud.rotations[index]);
    const Eigen::Matrix3d M = R * cloud.log_scales[index].array().exp().matrix().asDiagonal();
    return M * M.transpose();
}

std::optional<Splat2D> project_gaussian(const GaussianCloud& cloud, std::size_t index, const CameraView& camera,
                                        const RenderOptions& opts) {
    const Eigen::Vector3d p = camera.world_to_camera(cloud.positions[index]);
    if (!(p.z() > opts.z_near)) return std::nullopt;
    const Eigen::Matrix<double, 2, 3> A = projection_jacobian(camera, p) * camera.rotation;
    Splat2D s;
    s.gaussian_index = index;
    s.depth = p.z();
    s.mean2d = Eigen::Vector2d(camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy);
    s.cov2d = A * world_covariance(cloud, index) * A.transpose();
    s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
    s.cov2d += opts.dilation * Eigen::Matrix2d::Identity();
    return s;
}

RenderOutput render(const GaussianCloud& cloud, const CameraView& camera, const RenderOptions& opts) {
    const Frame frame = prepare(cloud, camera, opts);
    RenderOutput out;
    out.rgb = Image(camera.height, camera.width, 3);
    out.depth = Image(camera.height, camera.width, 1);
    out.alpha = Image(camera.height, camera.width, 1);
    if (opts.record_contribs) out.contribs.assign(cloud.size(), {});

    for_each_pixel(frame, camera, opts, [&](const std::vector<int>& tile, int x, int y) {
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        double depth = 0.0;
        const int pixel = y * camera.width + x;
        const double T = composite_pixel(frame, tile, x, y, opts, [&](const Sample& s) {
            const auto& splat = frame.splats[static_cast<std::size_t>(s.splat)];
            const double weight = s.alpha * s.transmittance;
            color += weight * splat.rgb;
            depth += weight * splat.depth;
            if (opts.record_contribs) {
                out.contribs[splat.gaussian].push_back(PixelContribution{pixel, s.alpha, s.transmittance});
            }
        });
        color += T * opts.background;
        const double coverage = 1.0 - T;
        for (int c = 0; c < 3; ++c) out.rgb(y, x, c) = color[c];
        out.alpha(y, x) = coverage;
        out.depth(y, x) = coverage > 0.0 ? depth / std::max(coverage, 1e-6) : std::numeric_limits<double>::infinity();
    });
    return out;
}

ParamGrads render_backward(const GaussianCloud& cloud, const CameraView& camera, const Image& upstream_rgb_grad,
                           const RenderOptions& opts) {
    if (upstream_rgb_grad.height() != camera.height || upstream_rgb_grad.width() != camera.width ||
        upstream_rgb_grad.channels() != 3) {
        throw ContractError("upstream gradient must be " + std::to_string(camera.height) + "x" +
                            std::to_string(camera.width) + "x3");
    }
    const Frame frame = prepare(cloud, camera, opts);
    const std::size_t m = frame.splats.size();
    std::vector<Eigen::Vector2d> g_mean(m, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> g_conic(m, Eigen::Matrix2d::Zero());
    std::vector<double> g_opacity(m, 0.0);
    std::vector<Eigen::Vector3d> g_rgb(m, Eigen::Vector3d::Zero());

    std::vector<Sample> samples;
    for_each_pixel(frame, camera, opts, [&](const std::vector<int>& tile, int x, int y) {
        const Eigen::Vector3d g(upstream_rgb_grad(y, x, 0), upstream_rgb_grad(y, x, 1), upstream_rgb_grad(y, x, 2));
        if (g.isZero(0.0)) return;
        samples.clear();
        const double T_final =
            composite_pixel(frame, tile, x, y, opts, [&](const Sample& s) { samples.push_back(s); });
        // Color contributed by everything behind the current sample, background included.
        Eigen::Vector3d behind = T_final * opts.background;
        for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
            const auto& splat = frame.splats[static_cast<std::size_t>(it->splat)];
            const std::size_t k = static_cast<std::size_t>(it->splat);
            const double weight = it->alpha * it->transmittance;
            g_rgb[k] += weight * g;
            const double g_alpha = g.dot(it->transmittance * splat.rgb - behind / (1.0 - it->alpha));
            behind += weight * splat.rgb;
            if (it->clamped) continue;
            g_opacity[k] += g_alpha * it->kernel;
            const double g_power = g_alpha * it->alpha;
            const Eigen::Vector2d& d = it->offset;
            g_mean[k] += g_power * (splat.conic * d);
            g_conic[k] += (-0.5 * g_power) * (d * d.transpose());
        }
    });

    ParamGrads grads(cloud.size());
    for (std::size_t k = 0; k < m; ++k) {
        const auto& s = frame.splats[k];
        const std::size_t i = s.gaussian;
        grads.visible[i] = true;
        if (cloud.is_frozen(i)) continue;
        grads.mean2d_grad_norm[i] = g_mean[k].norm();

        grads.colors[i] = kShC0 * g_rgb[k];
        const double o = s.opacity;
        grads.opacity_logits[i] = g_opacity[k] * o * (1.0 - o);

        // conic = cov^-1
        const Eigen::Matrix2d g_cov = -s.conic * g_conic[k] * s.conic;
        const Eigen::Matrix<double, 2, 3> A = s.jacobian * camera.rotation;
        const Eigen::Matrix3d g_sigma = A.transpose() * g_cov * A;
        const Eigen::Matrix<double, 2, 3> g_A = 2.0 * g_cov * A * s.sigma;
        const Eigen::Matrix<double, 2, 3> g_J = g_A * camera.rotation.transpose();

        const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
        const double fx = camera.fx, fy = camera.fy;
        const double z2 = z * z, z3 = z2 * z;
        Eigen::Vector3d g_p;
        g_p.x() = g_mean[k].x() * fx / z + g_J(0, 2) * (-fx / z2);
        g_p.y() = g_mean[k].y() * fy / z + g_J(1, 2) * (-fy / z2);
        g_p.z() = -g_mean[k].x() * fx * x / z2 - g_mean[k].y() * fy * y / z2 + g_J(0, 0) * (-fx / z2) +
                  g_J(0, 2) * (2.0 * fx * x / z3) + g_J(1, 1) * (-fy / z2) + g_J(1, 2) * (2.0 * fy * y / z3);
        grads.positions[i] = camera.rotation.transpose() * g_p;

        // sigma = M M^T with M = R diag(s)
        const Eigen::Vector4d q = cloud.rotations[i];
        const double q_norm = q.norm();
        const Eigen::Vector4d q_hat = q / q_norm;
        const Eigen::Matrix3d R = quaternion_to_matrix(q);
        const Eigen::Vector3d scale = cloud.log_scales[i].array().exp();
        const Eigen::Matrix3d M = R * scale.asDiagonal();
        const Eigen::Matrix3d g_M = 2.0 * g_sigma * M;
        const Eigen::Matrix3d Rt_gM = R.transpose() * g_M;
        for (int a = 0; a < 3; ++a) grads.log_scales[i][a] = Rt_gM(a, a) * scale[a];
        const Eigen::Matrix3d g_R = g_M * scale.asDiagonal();
        const Eigen::Vector4d g_q_hat = rotation_adjoint(q_hat, g_R);
        grads.rotations[i] = (g_q_hat - q_hat * q_hat.dot(g_q_hat)) / q_norm;
    }
    return grads;
}

}  // namespace gsedit
