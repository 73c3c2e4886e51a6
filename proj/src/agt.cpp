#include "gsedit/agt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

/// Compensated running sum.
class NeumaierSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            compensation_ += (sum_ - t) + v;
        } else {
            compensation_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

}  // namespace

Tensor resize_bilinear(const Tensor& map, int height, int width) {
    if (map.channels() != 1) throw ContractError("attention maps must have a single channel");
    if (map.empty()) throw ContractError("cannot resize an empty attention map");
    if (map.height() == height && map.width() == width) return map;
    Tensor out(height, width, 1);
    const double sy = static_cast<double>(map.height()) / height;
    const double sx = static_cast<double>(map.width()) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(map.height() - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, map.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(map.width() - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, map.width() - 1);
            const double tx = fx - x0;
            const double top = (1.0 - tx) * map(y0, x0) + tx * map(y0, x1);
            const double bottom = (1.0 - tx) * map(y1, x0) + tx * map(y1, x1);
            out(y, x) = (1.0 - ty) * top + ty * bottom;
        }
    }
    return out;
}

AttentionStack normalize_attention(const std::vector<RawAttention>& raw, int height, int width) {
    AttentionStack stack;
    for (const auto& view : raw) {
        if (view.maps.empty()) throw ContractError("view '" + view.view_id + "' has no attention maps");
        Tensor mean(height, width, 1);
        for (const auto& m : view.maps) {
            const Tensor r = resize_bilinear(m, height, width);
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r[i];
        }
        const double count = static_cast<double>(view.maps.size());
        for (double& v : mean.values()) v /= count;
        if (!mean.all_finite()) throw DataError("view '" + view.view_id + "' has non-finite attention values");
        const auto [lo, hi] = std::minmax_element(mean.values().begin(), mean.values().end());
        const double min = *lo, range = *hi - *lo;
        for (double& v : mean.values()) v = range > 0.0 ? (v - min) / range : 0.0;
        stack.view_ids.push_back(view.view_id);
        stack.maps.push_back(std::move(mean));
    }
    return stack;
}

std::vector<double> pool_attention(std::size_t gaussian_count, const std::vector<RenderOutput>& renders,
                                   const AttentionStack& stack) {
    if (renders.size() != stack.maps.size()) throw ContractError("one render per attention map is required");
    std::vector<NeumaierSum> sums(gaussian_count);
    std::vector<std::size_t> counts(gaussian_count, 0);
    for (std::size_t v = 0; v < renders.size(); ++v) {
        const auto& contribs = renders[v].contribs;
        if (contribs.size() != gaussian_count) {
            throw ContractError("render for view '" + stack.view_ids[v] + "' carries no contribution records");
        }
        const Tensor& map = stack.maps[v];
        for (std::size_t j = 0; j < gaussian_count; ++j) {
            for (const auto& c : contribs[j]) {
                sums[j].add(map[static_cast<std::size_t>(c.pixel)]);
                ++counts[j];
            }
        }
    }
    std::vector<double> weights(gaussian_count, 0.0);
    for (std::size_t j = 0; j < gaussian_count; ++j) {
        if (counts[j] > 0) weights[j] = std::clamp(sums[j].value() / static_cast<double>(counts[j]), 0.0, 1.0);
    }
    return weights;
}

std::vector<double> accumulate_attention(const GaussianCloud& cloud, const std::vector<CameraView>& cameras,
                                         const AttentionStack& stack, const RenderOptions& render_opts) {
    if (stack.view_ids.size() != stack.maps.size()) throw ContractError("attention stack ids and maps disagree");
    RenderOptions opts = render_opts;
    opts.record_contribs = true;
    std::vector<RenderOutput> renders;
    renders.reserve(stack.maps.size());
    for (std::size_t v = 0; v < stack.maps.size(); ++v) {
        const CameraView& cam = find_camera(cameras, stack.view_ids[v]);
        const Tensor& map = stack.maps[v];
        if (map.height() != cam.height || map.width() != cam.width || map.channels() != 1) {
            throw ContractError("attention map for '" + cam.id + "' is " + std::to_string(map.height()) + "x" +
                                std::to_string(map.width()) + ", camera renders " + std::to_string(cam.height) + "x" +
                                std::to_string(cam.width));
        }
        renders.push_back(render(cloud, cam, opts));
    }
    return pool_attention(cloud.size(), renders, stack);
}

ThresholdResult threshold_weights(const std::vector<double>& weights, double threshold) {
    ThresholdResult out;
    out.weights.reserve(weights.size());
    out.frozen.reserve(weights.size());
    for (double w : weights) {
        const double kept = w >= threshold ? w : 0.0;
        out.weights.push_back(kept);
        out.frozen.push_back(kept == 0.0);
    }
    return out;
}

std::size_t topk_count(std::size_t n, double k_percent) {
    const double exact = k_percent / 100.0 * static_cast<double>(n);
    return static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
}

PruneResult prune_topk(const GaussianCloud& cloud, const std::vector<double>& weights, double k_percent) {
    if (!(k_percent >= 0.0 && k_percent <= 100.0)) {
        throw ContractError("k_percent must be in [0, 100], got " + std::to_string(k_percent));
    }
    if (weights.size() != cloud.size()) throw ContractError("weight count does not match gaussian count");

    PruneResult out;
    const std::size_t m = std::min(topk_count(cloud.size(), k_percent), cloud.size());
    std::vector<bool> remove(cloud.size(), false);
    if (m > 0) {
        std::vector<double> sorted = weights;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m - 1), sorted.end(),
                         std::greater<>());
        out.threshold = sorted[m - 1];
        for (std::size_t j = 0; j < weights.size(); ++j) {
            remove[j] = weights[j] >= out.threshold && weights[j] > 0.0;
        }
    }
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (remove[j]) {
            out.pruned.push_back(j);
        } else {
            keep.push_back(j);
        }
    }
    out.cloud = select_rows(cloud, keep);
    return out;
}

}  // namespace gsedit
