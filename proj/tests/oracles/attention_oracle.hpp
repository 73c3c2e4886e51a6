#pragma once

// Pooled per-Gaussian attention mean computed from the brute-force renderer's
// per-pixel sample lists.

#include <vector>

#include "gsedit/scene.hpp"
#include "gsedit/tensor.hpp"
#include "reference_render.hpp"

namespace oracle {

inline std::vector<double> oracle_attention(const gsedit::GaussianCloud& cloud,
                                            const std::vector<gsedit::CameraView>& cams,
                                            const std::vector<gsedit::Tensor>& maps) {
    std::vector<long double> sum(cloud.size(), 0.0L);
    std::vector<long> count(cloud.size(), 0);
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const RefImage img = ref_render(cloud, cams[v]);
        for (std::size_t p = 0; p < img.pixels.size(); ++p) {
            for (const auto& s : img.pixels[p].samples) {
                sum[s.gaussian] += maps[v][p];
                ++count[s.gaussian];
            }
        }
    }
    std::vector<double> w(cloud.size(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (count[j] > 0) w[j] = static_cast<double>(sum[j] / count[j]);
    }
    return w;
}

}  // namespace oracle
