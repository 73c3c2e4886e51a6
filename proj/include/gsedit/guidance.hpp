#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gsedit/tensor.hpp"

namespace gsedit {

class ScoreProvider;

struct GuidanceScales {
    double text = 7.5;    ///< s_T
    double fusion = 1.0;  ///< s_M
    double source = 0.5;  ///< s_S
};

/// Two-condition classifier-free guidance (image + text):
///   e_uu + s_I (e_iu - e_uu) + s_T (e_it - e_iu)
ScoreField combine_ip2p(const ScoreField& e_uu, const ScoreField& e_iu, const ScoreField& e_it, double s_image,
                        double s_text);

/// Guidance with a fused multi-view image and the source image as separate
/// image conditions:
///   e_uu + s_T (e_mt - e_mu) + s_M (e_mu - e_uu) + s_S (e_su - e_uu)
///
/// The two image terms are evaluated as (s_M + s_S)(e_mu - e_uu) + s_S (e_su - e_mu),
/// which is algebraically identical and makes the result bit-equal to
/// `combine_ip2p(e_uu, e_mu, e_mt, s_M + s_S, s_T)` whenever e_su == e_mu.
ScoreField combine_mfg(const ScoreField& e_uu, const ScoreField& e_mu, const ScoreField& e_mt,
                       const ScoreField& e_su, const GuidanceScales& scales);

/// Cumulative products of (1 - beta) for beta linear in [beta_start, beta_end].
std::vector<double> linear_alpha_bar(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

struct SamplerConfig {
    int steps = 20;
    /// Start of the denoising trajectory as a fraction of the schedule length.
    double t_start = 0.84;
    /// When set, t_start is drawn uniformly from [t_min, t_max] with the seeded RNG.
    bool randomize_t_start = false;
    double t_min = 0.7;
    double t_max = 0.98;
    std::vector<double> alpha_bar = linear_alpha_bar();
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Schedule index where the trajectory starts.
int start_timestep(const SamplerConfig& cfg, double t_start_fraction);

/// Noises `x0` to the start timestep with the seeded RNG, then runs
/// `cfg.steps` deterministic (eta = 0) denoising updates driven by
/// `combine_mfg` over four provider queries per step. The final update
/// lands on alpha_bar = 1, so its output is the predicted clean tensor.
ScoreField edit_image(ScoreProvider& provider, const SamplerConfig& cfg, const ScoreField& x0,
                      const GuidanceScales& scales);

}  // namespace gsedit
