#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gsedit/render.hpp"
#include "gsedit/scene.hpp"
#include "gsedit/tensor.hpp"

namespace gsedit {

/// Per-group learning rates. `position` is multiplied by the scene extent.
struct LearningRates {
    double position = 1.6e-4;
    double color = 2.5e-3;
    double opacity = 5e-2;
    double log_scale = 5e-3;
    double rotation = 1e-3;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
};

struct DensifyConfig {
    bool enabled = true;
    int interval = 100;
    double grad_threshold = 0.01;  ///< on the running mean of the pixel-space 2D position gradient norm
    double clone_scale_fraction = 0.01;  ///< clone when max scale <= this fraction of the scene extent
    double split_factor = 1.6;
    double min_opacity = 0.005;
};

struct OptimizeConfig {
    int epochs = 8;
    /// Stops after this many iterations when positive, even mid-epoch.
    int max_iterations = 0;
    LearningRates lr;
    AdamConfig adam;
    DensifyConfig densify;
    double l1_weight = 1.0;
    double perceptual_weight = 1.0;
    std::uint64_t rng_seed = 0;
    RenderOptions render;

    void validate() const;
};

/// Perceptual distance d(rendered, target) and its gradient with respect to
/// `rendered`.
using PerceptualHook = std::function<std::pair<double, Image>(const Image& rendered, const Image& target)>;

/// mean((a - b)^2) with its exact gradient.
std::pair<double, Image> quadratic_perceptual_stub(const Image& rendered, const Image& target);

struct LossValue {
    double l1 = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
    Image grad;  ///< dtotal/drendered
};

/// l1_weight * mean|rendered - target| + perceptual_weight * hook(rendered, target).
/// The L1 subgradient at zero residual is zero.
LossValue edit_loss(const Image& rendered, const Image& target, const PerceptualHook& hook = {},
                    double l1_weight = 1.0, double perceptual_weight = 1.0);

/// Running sums of the 2D position gradient norm per Gaussian.
struct GradStats {
    std::vector<double> sum;
    std::vector<std::size_t> count;

    explicit GradStats(std::size_t n = 0) : sum(n, 0.0), count(n, 0) {}
    void add(const ParamGrads& grads);
    double mean(std::size_t i) const { return count[i] > 0 ? sum[i] / static_cast<double>(count[i]) : 0.0; }
};

struct DensifyResult {
    GaussianCloud cloud;
    /// For every output row, its source row in the input cloud; -1 for rows
    /// created by cloning or splitting.
    std::vector<std::ptrdiff_t> origin;
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t culled = 0;
};

/// Clones small and splits large unfrozen Gaussians whose mean gradient
/// norm exceeds the threshold, then culls unfrozen Gaussians below the
/// minimum opacity. Surviving rows keep their relative order; new rows are
/// appended. Frozen Gaussians are never touched.
DensifyResult densify(const GaussianCloud& cloud, const GradStats& stats, double extent, const DensifyConfig& cfg,
                      std::mt19937_64& rng);

struct LossRecord {
    std::size_t iteration = 0;
    std::string view_id;
    double l1 = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
};

struct OptimizeResult {
    GaussianCloud cloud;
    std::vector<LossRecord> history;
    /// Input row of every output row, -1 for densified additions.
    std::vector<std::ptrdiff_t> origin;
};

/// Called after every epoch with the epoch index and current cloud.
using EpochCallback = std::function<void(int epoch, const GaussianCloud& cloud)>;

/// Minimizes the edit loss of every camera against its target image over
/// the unfrozen Gaussians with Adam. `targets[i]` belongs to `cameras[i]`.
/// An empty `freeze_mask` freezes nothing. The returned cloud carries the
/// freeze mask.
OptimizeResult optimize_scene(const GaussianCloud& cloud, const std::vector<CameraView>& cameras,
                              const std::vector<Image>& targets, const std::vector<bool>& freeze_mask,
                              const OptimizeConfig& cfg, const PerceptualHook& hook = {},
                              const EpochCallback& on_epoch = {});

}  // namespace gsedit
