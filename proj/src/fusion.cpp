#include "gsedit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gsedit/error.hpp"

namespace gsedit {

SparseLayer::SparseLayer(int h, int w)
    : height(h),
      width(w),
      present(static_cast<std::size_t>(h) * w, false),
      color(static_cast<std::size_t>(h) * w, Eigen::Vector3d::Zero()),
      depth(static_cast<std::size_t>(h) * w, 0.0) {}

std::vector<ViewBundle> rank_and_filter(const std::vector<ViewBundle>& bundles, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ContractError("keep_fraction must be in (0, 1], got " + std::to_string(keep_fraction));
    }
    std::string missing;
    for (const auto& b : bundles) {
        if (!b.score) missing += (missing.empty() ? "" : ", ") + b.camera_id;
    }
    if (!missing.empty()) throw ContractError("views without a score: " + missing);

    std::vector<std::size_t> order(bundles.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *bundles[a].score > *bundles[b].score; });
    // Guard against 0.85 * 20 landing a hair above 17.
    const double exact = keep_fraction * static_cast<double>(bundles.size());
    const auto keep = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    std::vector<ViewBundle> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep && i < order.size(); ++i) out.push_back(bundles[order[i]]);
    return out;
}

std::vector<std::size_t> select_adjacent_views(const CameraView& target, const std::vector<CameraView>& candidates,
                                               std::size_t n, double lambda) {
    if (candidates.empty()) throw ContractError("select_adjacent_views needs at least one candidate");
    if (n < 1) throw ContractError("number of adjacent views must be at least 1");

    Eigen::Vector3d centroid = target.center();
    for (const auto& c : candidates) centroid += c.center();
    centroid /= static_cast<double>(candidates.size() + 1);
    double radius = (target.center() - centroid).norm();
    for (const auto& c : candidates) radius = std::max(radius, (c.center() - centroid).norm());
    const double extent = radius > 0.0 ? 2.0 * radius : 1.0;

    std::vector<double> distance(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double positional = (candidates[i].center() - target.center()).norm() / extent;
        const double angular = 1.0 - candidates[i].forward().dot(target.forward());
        distance[i] = positional + lambda * angular;
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distance[a] < distance[b]; });
    order.resize(std::min(n, order.size()));
    return order;
}

SparseLayer reproject_view(const ViewBundle& source, const CameraView& source_camera,
                           const CameraView& target_camera, double z_near) {
    if (!source.depth) throw ContractError("view '" + source.camera_id + "' has no depth map to reproject");
    source.validate_against(source_camera);
    const Image& depth = *source.depth;
    SparseLayer layer(target_camera.height, target_camera.width);
    for (int v = 0; v < source_camera.height; ++v) {
        for (int u = 0; u < source_camera.width; ++u) {
            const double d = depth(v, u);
            if (!std::isfinite(d)) continue;
            const Eigen::Vector3d p_src((u - source_camera.cx) / source_camera.fx * d,
                                        (v - source_camera.cy) / source_camera.fy * d, d);
            const Eigen::Vector3d p_trg = target_camera.world_to_camera(source_camera.camera_to_world(p_src));
            if (!(p_trg.z() > z_near)) continue;
            const double px = target_camera.fx * p_trg.x() / p_trg.z() + target_camera.cx;
            const double py = target_camera.fy * p_trg.y() / p_trg.z() + target_camera.cy;
            const double rx = std::floor(px + 0.5);
            const double ry = std::floor(py + 0.5);
            if (!(rx >= 0.0 && rx < target_camera.width && ry >= 0.0 && ry < target_camera.height)) continue;
            const std::size_t k = layer.index(static_cast<int>(ry), static_cast<int>(rx));
            if (layer.present[k] && layer.depth[k] <= p_trg.z()) continue;
            layer.present[k] = true;
            layer.depth[k] = p_trg.z();
            layer.color[k] = Eigen::Vector3d(source.rgb(v, u, 0), source.rgb(v, u, 1), source.rgb(v, u, 2));
        }
    }
    return layer;
}

std::pair<Image, Mask> blend_layers(const std::vector<SparseLayer>& layers, int height, int width) {
    for (const auto& l : layers) {
        if (l.height != height || l.width != width) throw ContractError("layer size does not match target size");
    }
    Image image(height, width, 3);
    Mask coverage(height, width);
    struct Entry {
        double depth;
        std::size_t layer;
    };
    std::vector<Entry> entries;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            entries.clear();
            const std::size_t k = static_cast<std::size_t>(y) * width + x;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                if (layers[l].present[k]) entries.push_back({layers[l].depth[k], l});
            }
            if (entries.empty()) continue;
            std::stable_sort(entries.begin(), entries.end(),
                             [](const Entry& a, const Entry& b) { return a.depth > b.depth; });
            Eigen::Vector3d acc = layers[entries.front().layer].color[k];
            double previous = entries.front().depth;
            for (std::size_t e = 1; e < entries.size(); ++e) {
                const double d = entries[e].depth;
                const double w = d / (d + previous);
                acc = (1.0 - w) * layers[entries[e].layer].color[k] + w * acc;
                previous = d;
            }
            for (int c = 0; c < 3; ++c) image(y, x, c) = acc[c];
            coverage.set(y, x, true);
        }
    }
    return {std::move(image), std::move(coverage)};
}

Image refine_background(const Image& fused, const Mask& coverage, const ViewBundle& source, const Mask& object_mask) {
    const int H = fused.height(), W = fused.width();
    if (fused.channels() != 3 || coverage.height != H || coverage.width != W || source.rgb.height() != H ||
        source.rgb.width() != W || source.rgb.channels() != 3 || object_mask.height != H || object_mask.width != W) {
        throw ContractError("refine_background: fused image, coverage, source and mask dimensions disagree");
    }
    Image out = source.rgb;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (object_mask(y, x) && coverage(y, x)) {
                for (int c = 0; c < 3; ++c) out(y, x, c) = fused(y, x, c);
            }
        }
    }
    return out;
}

std::pair<Image, Mask> fuse_views_with_coverage(const ViewBundle& target, const CameraView& target_camera,
                                                const std::vector<std::pair<ViewBundle, CameraView>>& sources,
                                                const FusionConfig& config) {
    target.validate_against(target_camera);
    std::vector<CameraView> candidates;
    candidates.reserve(sources.size());
    for (const auto& s : sources) candidates.push_back(s.second);
    const auto selected = select_adjacent_views(target_camera, candidates, config.n_adjacent, config.lambda);

    std::vector<SparseLayer> layers;
    layers.reserve(selected.size());
    for (std::size_t i : selected) {
        layers.push_back(reproject_view(sources[i].first, sources[i].second, target_camera, config.z_near));
    }
    auto [fused, coverage] = blend_layers(layers, target_camera.height, target_camera.width);
    const Mask object_mask = target.mask ? *target.mask : Mask(target_camera.height, target_camera.width, true);
    return {refine_background(fused, coverage, target, object_mask), std::move(coverage)};
}

Image fuse_views(const ViewBundle& target, const CameraView& target_camera,
                 const std::vector<std::pair<ViewBundle, CameraView>>& sources, const FusionConfig& config) {
    return fuse_views_with_coverage(target, target_camera, sources, config).first;
}

}  // namespace gsedit
