#include "gsedit/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gsedit/error.hpp"
#include "gsedit/provider.hpp"

namespace gsedit {
namespace {

void require_same_shape(std::initializer_list<const ScoreField*> fields, const char* op) {
    const ScoreField* first = *fields.begin();
    for (const ScoreField* f : fields) {
        if (!f->same_shape(*first)) throw ContractError(std::string(op) + ": score fields have different shapes");
    }
}

}  // namespace

ScoreField combine_ip2p(const ScoreField& e_uu, const ScoreField& e_iu, const ScoreField& e_it, double s_image,
                        double s_text) {
    require_same_shape({&e_uu, &e_iu, &e_it}, "combine_ip2p");
    ScoreField out = e_uu;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = e_uu[i] + s_image * (e_iu[i] - e_uu[i]) + s_text * (e_it[i] - e_iu[i]);
    }
    return out;
}

ScoreField combine_mfg(const ScoreField& e_uu, const ScoreField& e_mu, const ScoreField& e_mt,
                       const ScoreField& e_su, const GuidanceScales& scales) {
    require_same_shape({&e_uu, &e_mu, &e_mt, &e_su}, "combine_mfg");
    const double s_image = scales.fusion + scales.source;
    ScoreField out = e_uu;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double image_term = s_image * (e_mu[i] - e_uu[i]) + scales.source * (e_su[i] - e_mu[i]);
        out[i] = e_uu[i] + image_term + scales.text * (e_mt[i] - e_mu[i]);
    }
    return out;
}

std::vector<double> linear_alpha_bar(std::size_t steps, double beta_start, double beta_end) {
    std::vector<double> alpha_bar(steps);
    double product = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double frac = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
        product *= 1.0 - (beta_start + (beta_end - beta_start) * frac);
        alpha_bar[t] = product;
    }
    return alpha_bar;
}

void SamplerConfig::validate() const {
    if (steps < 0) throw ValidationError("sampler steps must be nonnegative");
    if (alpha_bar.empty()) throw ValidationError("alpha_bar schedule is empty");
    for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) {
            throw ValidationError("alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
        }
        if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1])) {
            throw ValidationError("alpha_bar must be strictly decreasing");
        }
    }
    if (!(t_start >= 0.0 && t_start <= 1.0)) throw ValidationError("t_start must be in [0, 1]");
    if (!(t_min >= 0.0 && t_min <= t_max && t_max <= 1.0)) throw ValidationError("t range must satisfy 0 <= min <= max <= 1");
}

int start_timestep(const SamplerConfig& cfg, double t_start_fraction) {
    const int last = static_cast<int>(cfg.alpha_bar.size()) - 1;
    const int t = static_cast<int>(std::lround(t_start_fraction * last));
    return std::clamp(t, 0, last);
}

ScoreField edit_image(ScoreProvider& provider, const SamplerConfig& cfg, const ScoreField& x0,
                      const GuidanceScales& scales) {
    cfg.validate();
    if (!x0.all_finite()) throw NumericError("edit_image: input tensor has non-finite values");

    std::mt19937_64 rng(cfg.rng_seed);
    double fraction = cfg.t_start;
    if (cfg.randomize_t_start) fraction = std::uniform_real_distribution<double>(cfg.t_min, cfg.t_max)(rng);
    const int t0 = start_timestep(cfg, fraction);

    std::normal_distribution<double> normal(0.0, 1.0);
    ScoreField noise(x0.height(), x0.width(), x0.channels());
    for (double& v : noise.values()) v = normal(rng);
    provider.on_noise_injected(noise);

    ScoreField z = x0;
    {
        const double a = cfg.alpha_bar[static_cast<std::size_t>(t0)];
        const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = sa * x0[i] + sb * noise[i];
    }

    const auto query = [&](int t, ImageCondition image, TextCondition text) {
        ScoreField e = provider.predict(z, t, image, text);
        if (!e.same_shape(z)) {
            throw ContractError(std::string("provider returned a tensor of the wrong shape for (") + to_string(image) +
                                ", " + to_string(text) + ")");
        }
        return e;
    };

    for (int k = 0; k < cfg.steps; ++k) {
        const int t = static_cast<int>(std::lround(static_cast<double>(t0) * (cfg.steps - k) / cfg.steps));
        const int t_prev =
            k + 1 < cfg.steps
                ? static_cast<int>(std::lround(static_cast<double>(t0) * (cfg.steps - k - 1) / cfg.steps))
                : -1;

        const ScoreField e_uu = query(t, ImageCondition::None, TextCondition::None);
        const ScoreField e_mu = query(t, ImageCondition::Fusion, TextCondition::None);
        const ScoreField e_mt = query(t, ImageCondition::Fusion, TextCondition::Prompt);
        const ScoreField e_su = query(t, ImageCondition::Source, TextCondition::None);
        const ScoreField eps = combine_mfg(e_uu, e_mu, e_mt, e_su, scales);

        const double a_t = cfg.alpha_bar[static_cast<std::size_t>(t)];
        const double a_prev = t_prev >= 0 ? cfg.alpha_bar[static_cast<std::size_t>(t_prev)] : 1.0;
        const double sqrt_a_t = std::sqrt(a_t), sqrt_b_t = std::sqrt(1.0 - a_t);
        const double sqrt_a_prev = std::sqrt(a_prev), sqrt_b_prev = std::sqrt(1.0 - a_prev);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x0_hat = (z[i] - sqrt_b_t * eps[i]) / sqrt_a_t;
            z[i] = sqrt_a_prev * x0_hat + sqrt_b_prev * eps[i];
        }
        if (!z.all_finite()) throw NumericError("edit_image: non-finite values at step " + std::to_string(k));
    }
    return z;
}

}  // namespace gsedit
