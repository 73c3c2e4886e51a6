#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gsedit/scene.hpp"
#include "gsedit/tensor.hpp"

namespace gsedit {

/// One source view scattered into a target image plane. `present` marks the
/// pixels that received a sample; `depth` is the target-frame z there.
struct SparseLayer {
    int height = 0;
    int width = 0;
    std::vector<bool> present;
    std::vector<Eigen::Vector3d> color;
    std::vector<double> depth;

    SparseLayer() = default;
    SparseLayer(int h, int w);

    std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

struct FusionConfig {
    std::size_t n_adjacent = 5;
    double keep_fraction = 0.85;
    double lambda = 1.0;  ///< weight of the orientation term in the view distance
    double z_near = 0.01;
};

/// Sorts by descending score (stable on input order) and keeps the first
/// ceil(keep_fraction * n).
std::vector<ViewBundle> rank_and_filter(const std::vector<ViewBundle>& bundles, double keep_fraction = 0.85);

/// Indices of the `n` candidates minimizing
///   |c_i - c_t| / E + lambda * (1 - <z_i, z_t>)
/// with c camera centers, z optical axes and E the bounding-sphere diameter
/// of all centers. Ascending distance, ties by index.
std::vector<std::size_t> select_adjacent_views(const CameraView& target, const std::vector<CameraView>& candidates,
                                               std::size_t n = 5, double lambda = 1.0);

/// Unprojects every finite-depth source pixel, moves it into the target
/// camera and scatters it to the nearest pixel, keeping the nearest sample
/// on collisions.
SparseLayer reproject_view(const ViewBundle& source, const CameraView& source_camera,
                           const CameraView& target_camera, double z_near = 0.01);

/// Depth-ordered blend: the farthest sample initializes the pixel, each
/// nearer sample l then mixes in as I = (1 - w) I_l + w I with
/// w = D_l / (D_l + D_prev). Uncovered pixels are zero.
std::pair<Image, Mask> blend_layers(const std::vector<SparseLayer>& layers, int height, int width);

/// Keeps fused pixels inside the object mask (where covered) and takes the
/// source image everywhere else.
Image refine_background(const Image& fused, const Mask& coverage, const ViewBundle& source, const Mask& object_mask);

/// Full per-target fusion: adjacent-view selection, reprojection, blending
/// and background refinement. The target's own mask is used as the object
/// mask; without one, only uncovered pixels fall back to the source.
Image fuse_views(const ViewBundle& target, const CameraView& target_camera,
                 const std::vector<std::pair<ViewBundle, CameraView>>& sources, const FusionConfig& config = {});

/// Same as `fuse_views` but also returns the blend coverage.
std::pair<Image, Mask> fuse_views_with_coverage(const ViewBundle& target, const CameraView& target_camera,
                                                const std::vector<std::pair<ViewBundle, CameraView>>& sources,
                                                const FusionConfig& config = {});

}  // namespace gsedit
