#include "gsedit/optimize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

/// First and second moments for one parameter group, `dim` values per Gaussian.
struct AdamGroup {
    int dim = 0;
    std::vector<double> m;
    std::vector<double> v;

    AdamGroup(int d, std::size_t n) : dim(d), m(n * d, 0.0), v(n * d, 0.0) {}

    void remap(const std::vector<std::ptrdiff_t>& origin) {
        std::vector<double> m2(origin.size() * dim, 0.0), v2(origin.size() * dim, 0.0);
        for (std::size_t i = 0; i < origin.size(); ++i) {
            if (origin[i] < 0) continue;
            const auto src = static_cast<std::size_t>(origin[i]);
            for (int d = 0; d < dim; ++d) {
                m2[i * dim + d] = m[src * dim + d];
                v2[i * dim + d] = v[src * dim + d];
            }
        }
        m = std::move(m2);
        v = std::move(v2);
    }

    template <typename Param, typename Grad>
    void step(std::size_t i, Param& p, const Grad& g, double lr, const AdamConfig& cfg, double bias1, double bias2) {
        for (int d = 0; d < dim; ++d) {
            double& mm = m[i * dim + d];
            double& vv = v[i * dim + d];
            const double gd = g[d];
            mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * gd;
            vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * gd * gd;
            const double m_hat = mm / bias1;
            const double v_hat = vv / bias2;
            p[d] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
};

struct AdamState {
    AdamGroup position, rotation, log_scale, color, opacity;

    explicit AdamState(std::size_t n)
        : position(3, n), rotation(4, n), log_scale(3, n), color(3, n), opacity(1, n) {}

    void remap(const std::vector<std::ptrdiff_t>& origin) {
        for (AdamGroup* g : {&position, &rotation, &log_scale, &color, &opacity}) g->remap(origin);
    }
};

Eigen::Vector3d sample_offset(const GaussianCloud& cloud, std::size_t i, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d n;
    for (int d = 0; d < 3; ++d) n[d] = normal(rng);
    const Eigen::Vector3d s = cloud.log_scales[i].array().exp();
    return quaternion_to_matrix(cloud.rotations[i]) * s.cwiseProduct(n);
}

void check_image(const Image& img, const CameraView& cam, const char* what) {
    if (img.height() != cam.height || img.width() != cam.width || img.channels() != 3) {
        throw ContractError(std::string(what) + " for '" + cam.id + "' is " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()) + "x" + std::to_string(img.channels()) +
                            ", expected " + std::to_string(cam.height) + "x" + std::to_string(cam.width) + "x3");
    }
}

}  // namespace

void OptimizeConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be at least 1");
    if (max_iterations < 0) throw ValidationError("max_iterations must be nonnegative");
    for (double r : {lr.position, lr.color, lr.opacity, lr.log_scale, lr.rotation}) {
        if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("learning rates must be positive and finite");
    }
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
        throw ValidationError("adam betas must be in [0, 1) and epsilon positive");
    }
    if (densify.interval < 1) throw ValidationError("densify interval must be at least 1");
    if (!(densify.split_factor > 0.0)) throw ValidationError("split factor must be positive");
    if (!(l1_weight >= 0.0) || !(perceptual_weight >= 0.0)) throw ValidationError("loss weights must be nonnegative");
}

std::pair<double, Image> quadratic_perceptual_stub(const Image& rendered, const Image& target) {
    if (!rendered.same_shape(target)) throw ContractError("perceptual stub: image shapes differ");
    Image grad(rendered.height(), rendered.width(), rendered.channels());
    const double n = static_cast<double>(rendered.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double r = rendered[i] - target[i];
        sum += r * r;
        grad[i] = 2.0 * r / n;
    }
    return {sum / n, std::move(grad)};
}

LossValue edit_loss(const Image& rendered, const Image& target, const PerceptualHook& hook, double l1_weight,
                    double perceptual_weight) {
    if (!rendered.same_shape(target)) throw ContractError("edit_loss: rendered and target shapes differ");
    if (rendered.empty()) throw ContractError("edit_loss: empty images");
    LossValue out;
    out.grad = Image(rendered.height(), rendered.width(), rendered.channels());
    const double n = static_cast<double>(rendered.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double r = rendered[i] - target[i];
        sum += std::abs(r);
        out.grad[i] = l1_weight * static_cast<double>((r > 0.0) - (r < 0.0)) / n;
    }
    out.l1 = sum / n;
    if (hook) {
        auto [value, grad] = hook(rendered, target);
        if (!std::isfinite(value) || !grad.all_finite()) throw NumericError("perceptual hook returned non-finite values");
        if (!grad.same_shape(rendered)) throw ContractError("perceptual hook gradient has the wrong shape");
        out.perceptual = value;
        for (std::size_t i = 0; i < grad.size(); ++i) out.grad[i] += perceptual_weight * grad[i];
    }
    out.total = l1_weight * out.l1 + perceptual_weight * out.perceptual;
    return out;
}

void GradStats::add(const ParamGrads& grads) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads.visible[i]) continue;
        sum[i] += grads.mean2d_grad_norm[i];
        ++count[i];
    }
}

DensifyResult densify(const GaussianCloud& cloud, const GradStats& stats, double extent, const DensifyConfig& cfg,
                      std::mt19937_64& rng) {
    if (stats.sum.size() != cloud.size()) throw ContractError("densify: gradient statistics do not match the cloud");
    GaussianCloud grown = select_rows(cloud, std::span<const std::size_t>{});
    std::vector<std::size_t> kept;
    std::vector<bool> removed(cloud.size(), false);
    DensifyResult out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.is_frozen(i) || !(stats.mean(i) > cfg.grad_threshold)) continue;
        const double max_scale = std::exp(cloud.log_scales[i].maxCoeff());
        if (max_scale <= cfg.clone_scale_fraction * extent) {
            grown.append_row(cloud, i);
            grown.positions.back() += sample_offset(cloud, i, rng);
            ++out.cloned;
        } else {
            for (int k = 0; k < 2; ++k) {
                grown.append_row(cloud, i);
                grown.positions.back() += sample_offset(cloud, i, rng);
                grown.log_scales.back().array() -= std::log(cfg.split_factor);
            }
            removed[i] = true;
            ++out.split;
        }
    }

    std::vector<std::ptrdiff_t> origin;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (removed[i]) continue;
        if (!cloud.is_frozen(i) && cloud.opacity(i) < cfg.min_opacity) {
            ++out.culled;
            continue;
        }
        kept.push_back(i);
        origin.push_back(static_cast<std::ptrdiff_t>(i));
    }
    out.cloud = select_rows(cloud, kept);
    for (std::size_t j = 0; j < grown.size(); ++j) {
        if (grown.opacity(j) < cfg.min_opacity) {
            ++out.culled;
            continue;
        }
        out.cloud.append_row(grown, j);
        origin.push_back(-1);
    }
    out.origin = std::move(origin);
    return out;
}

OptimizeResult optimize_scene(const GaussianCloud& cloud, const std::vector<CameraView>& cameras,
                              const std::vector<Image>& targets, const std::vector<bool>& freeze_mask,
                              const OptimizeConfig& cfg, const PerceptualHook& hook, const EpochCallback& on_epoch) {
    cfg.validate();
    if (cameras.empty()) throw ContractError("optimize_scene needs at least one view");
    if (targets.size() != cameras.size()) throw ContractError("one target image per camera is required");
    if (!freeze_mask.empty() && freeze_mask.size() != cloud.size()) {
        throw ContractError("freeze mask has " + std::to_string(freeze_mask.size()) + " entries for " +
                            std::to_string(cloud.size()) + " gaussians");
    }
    for (std::size_t v = 0; v < cameras.size(); ++v) check_image(targets[v], cameras[v], "target image");

    OptimizeResult result;
    result.cloud = cloud;
    GaussianCloud& g = result.cloud;
    g.frozen = freeze_mask.empty() ? std::vector<bool>(cloud.size(), false) : freeze_mask;
    result.origin.resize(cloud.size());
    std::iota(result.origin.begin(), result.origin.end(), std::ptrdiff_t{0});

    const double extent = scene_extent(cameras);
    const double lr_position = cfg.lr.position * extent;
    AdamState adam(g.size());
    GradStats stats(g.size());
    std::mt19937_64 rng(cfg.rng_seed);

    std::vector<std::size_t> order(cameras.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t iteration = 0;
    const auto limit = static_cast<std::size_t>(cfg.max_iterations);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t v : order) {
            if (limit > 0 && iteration >= limit) break;
            const CameraView& cam = cameras[v];
            const RenderOutput rendered = render(g, cam, cfg.render);
            const LossValue loss = edit_loss(rendered.rgb, targets[v], hook, cfg.l1_weight, cfg.perceptual_weight);
            if (!std::isfinite(loss.total)) {
                throw NumericError("non-finite loss at iteration " + std::to_string(iteration) + " on view '" +
                                   cam.id + "'");
            }
            result.history.push_back({iteration, cam.id, loss.l1, loss.perceptual, loss.total});

            const ParamGrads grads = render_backward(g, cam, loss.grad, cfg.render);
            stats.add(grads);

            const double t = static_cast<double>(iteration + 1);
            const double bias1 = 1.0 - std::pow(cfg.adam.beta1, t);
            const double bias2 = 1.0 - std::pow(cfg.adam.beta2, t);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (g.is_frozen(i)) continue;
                adam.position.step(i, g.positions[i], grads.positions[i], lr_position, cfg.adam, bias1, bias2);
                const Eigen::Vector4d rotation_before = g.rotations[i];
                adam.rotation.step(i, g.rotations[i], grads.rotations[i], cfg.lr.rotation, cfg.adam, bias1, bias2);
                adam.log_scale.step(i, g.log_scales[i], grads.log_scales[i], cfg.lr.log_scale, cfg.adam, bias1,
                                    bias2);
                adam.color.step(i, g.colors[i], grads.colors[i], cfg.lr.color, cfg.adam, bias1, bias2);
                std::array<double, 1> op{g.opacity_logits[i]};
                adam.opacity.step(i, op, std::array<double, 1>{grads.opacity_logits[i]}, cfg.lr.opacity, cfg.adam,
                                  bias1, bias2);
                g.opacity_logits[i] = op[0];
                // Renormalizing an untouched quaternion would perturb its low bits and
                // break exact fixed points.
                if (g.rotations[i] != rotation_before) {
                    const double norm = g.rotations[i].norm();
                    if (norm > 0.0) g.rotations[i] /= norm;
                }
            }
            ++iteration;

            if (cfg.densify.enabled && iteration % static_cast<std::size_t>(cfg.densify.interval) == 0) {
                DensifyResult d = densify(g, stats, extent, cfg.densify, rng);
                GradStats next(d.cloud.size());
                std::vector<std::ptrdiff_t> origin(d.origin.size(), -1);
                for (std::size_t j = 0; j < d.origin.size(); ++j) {
                    if (d.origin[j] < 0) continue;
                    const auto src = static_cast<std::size_t>(d.origin[j]);
                    origin[j] = result.origin[src];
                    if (!(stats.mean(src) > cfg.densify.grad_threshold)) {
                        next.sum[j] = stats.sum[src];
                        next.count[j] = stats.count[src];
                    }
                }
                adam.remap(d.origin);
                stats = std::move(next);
                result.origin = std::move(origin);
                g = std::move(d.cloud);
            }
        }
        if (on_epoch) on_epoch(epoch, g);
        if (limit > 0 && iteration >= limit) break;
    }
    return result;
}

}  // namespace gsedit
