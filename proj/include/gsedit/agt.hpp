#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gsedit/render.hpp"
#include "gsedit/scene.hpp"
#include "gsedit/tensor.hpp"

namespace gsedit {

/// Per-view attention maps in [0, 1], all at render resolution.
struct AttentionStack {
    std::vector<std::string> view_ids;
    std::vector<Tensor> maps;  ///< H x W x 1 each
};

/// Raw attention maps for one view (several layers or timesteps allowed).
struct RawAttention {
    std::string view_id;
    std::vector<Tensor> maps;
};

/// Bilinear resize (half-pixel centers, edge clamped) of a single-channel map.
Tensor resize_bilinear(const Tensor& map, int height, int width);

/// Per view: resize every raw map to the target size, average them, then
/// min-max normalize to [0, 1]. A view whose average is constant becomes
/// all zeros.
AttentionStack normalize_attention(const std::vector<RawAttention>& raw, int height, int width);

/// Mean attention over every pixel each Gaussian composited into, pooled
/// across views. Gaussians with an empty footprint get weight 0.
std::vector<double> accumulate_attention(const GaussianCloud& cloud, const std::vector<CameraView>& cameras,
                                         const AttentionStack& stack, const RenderOptions& render_opts = {});

/// Pooling step of `accumulate_attention` on already recorded footprints;
/// `renders[v]` carries contribution records for `stack.maps[v]`.
std::vector<double> pool_attention(std::size_t gaussian_count, const std::vector<RenderOutput>& renders,
                                   const AttentionStack& stack);

struct ThresholdResult {
    std::vector<double> weights;
    std::vector<bool> frozen;
};

/// w' = w if w >= threshold else 0; frozen exactly where w' == 0.
ThresholdResult threshold_weights(const std::vector<double>& weights, double threshold = 0.1);

struct PruneResult {
    GaussianCloud cloud;
    std::vector<std::size_t> pruned;  ///< ascending original indices
    double threshold = 0.0;           ///< weight of the ceil(k% N)-th ranked Gaussian
};

/// Removes every Gaussian whose weight reaches the top-k% threshold
/// (k in percent, ties at the threshold are removed too). Zero weights are
/// never pruned.
PruneResult prune_topk(const GaussianCloud& cloud, const std::vector<double>& weights, double k_percent = 0.15);

/// ceil(k% of n) with a small guard against floating-point overshoot.
std::size_t topk_count(std::size_t n, double k_percent);

}  // namespace gsedit
