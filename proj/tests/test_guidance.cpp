#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gsedit/error.hpp"
#include "gsedit/guidance.hpp"
#include "gsedit/provider.hpp"
#include "test_util.hpp"

using namespace gsedit;
using testutil::random_tensor;

namespace {

Tensor constant(double v) { return Tensor(3, 4, 2, v); }

void expect_all(const Tensor& t, double v) {
    for (double x : t.values()) EXPECT_EQ(x, v);
}

/// Counts queries per conditioning and answers with zeros.
class CountingProvider : public ScoreProvider {
public:
    ScoreField predict(const ScoreField& z_t, int, ImageCondition image, TextCondition text) override {
        ++counts[{image, text}];
        ++total;
        return ScoreField(z_t.height(), z_t.width(), z_t.channels());
    }
    std::map<Conditioning, int> counts;
    int total = 0;
};

class WrongShapeProvider : public ScoreProvider {
public:
    ScoreField predict(const ScoreField&, int, ImageCondition, TextCondition) override { return ScoreField(1, 1, 1); }
};

class NanProvider : public ScoreProvider {
public:
    ScoreField predict(const ScoreField& z, int, ImageCondition, TextCondition) override {
        return ScoreField(z.height(), z.width(), z.channels(), std::nan(""));
    }
};

SamplerConfig oracle_config(double t_start) {
    SamplerConfig cfg;
    cfg.t_start = t_start;
    cfg.rng_seed = 17;
    return cfg;
}

}  // namespace

TEST(CombineIp2p, Examples) {
    std::mt19937_64 rng(1);
    const auto a = random_tensor(3, 4, 2, rng), b = random_tensor(3, 4, 2, rng), c = random_tensor(3, 4, 2, rng);
    EXPECT_EQ(combine_ip2p(a, b, c, 0.0, 0.0), a);
    const auto one = combine_ip2p(a, b, c, 1.0, 1.0);
    for (std::size_t i = 0; i < one.size(); ++i) EXPECT_NEAR(one[i], c[i], 1e-15);
    expect_all(combine_ip2p(constant(0), constant(1), constant(2), 1.5, 7.5), 9.0);
}

TEST(CombineMfg, Examples) {
    std::mt19937_64 rng(2);
    const auto a = random_tensor(3, 4, 2, rng), b = random_tensor(3, 4, 2, rng), c = random_tensor(3, 4, 2, rng),
               d = random_tensor(3, 4, 2, rng);
    EXPECT_EQ(combine_mfg(a, b, c, d, {0.0, 0.0, 0.0}), a);
    expect_all(combine_mfg(constant(0), constant(1), constant(2), constant(0.5), GuidanceScales{}), 8.75);
}

TEST(CombineMfg, DefaultScales) {
    const GuidanceScales s;
    EXPECT_EQ(s.text, 7.5);
    EXPECT_EQ(s.fusion, 1.0);
    EXPECT_EQ(s.source, 0.5);
}

TEST(CombineMfg, ReducesToIp2pWhenConditionsCoincide) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> scale(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto uu = random_tensor(5, 6, 4, rng), m = random_tensor(5, 6, 4, rng), mt = random_tensor(5, 6, 4, rng);
        const GuidanceScales s{scale(rng), scale(rng), scale(rng)};
        EXPECT_EQ(combine_mfg(uu, m, mt, m, s), combine_ip2p(uu, m, mt, s.fusion + s.source, s.text));
    }
}

TEST(Combinators, AreLinearInEachArgument) {
    std::mt19937_64 rng(4);
    const GuidanceScales s{7.5, 1.0, 0.5};
    std::vector<Tensor> x, y;
    for (int k = 0; k < 4; ++k) {
        x.push_back(random_tensor(4, 4, 3, rng));
        y.push_back(random_tensor(4, 4, 3, rng));
    }
    const double alpha = 0.7, beta = -1.3;
    for (int arg = 0; arg < 4; ++arg) {
        auto mix = x;
        for (std::size_t i = 0; i < mix[arg].size(); ++i) mix[arg][i] = alpha * x[arg][i] + beta * y[arg][i];
        auto with_y = x;
        with_y[arg] = y[arg];
        auto zero = x;
        zero[arg] = Tensor(4, 4, 3);
        const auto f = [&](const std::vector<Tensor>& v) { return combine_mfg(v[0], v[1], v[2], v[3], s); };
        const auto fm = f(mix), fx = f(x), fy = f(with_y), f0 = f(zero);
        for (std::size_t i = 0; i < fm.size(); ++i) {
            EXPECT_NEAR(fm[i] - f0[i], alpha * (fx[i] - f0[i]) + beta * (fy[i] - f0[i]), 1e-12);
        }
        if (arg < 3) {
            const auto g = [&](const std::vector<Tensor>& v) { return combine_ip2p(v[0], v[1], v[2], 1.5, 7.5); };
            const auto gm = g(mix), gx = g(x), gy = g(with_y), g0 = g(zero);
            for (std::size_t i = 0; i < gm.size(); ++i) {
                EXPECT_NEAR(gm[i] - g0[i], alpha * (gx[i] - g0[i]) + beta * (gy[i] - g0[i]), 1e-12);
            }
        }
    }
}

TEST(Combinators, ShapeMismatchIsContractError) {
    EXPECT_THROW(combine_ip2p(Tensor(2, 2, 1), Tensor(2, 2, 1), Tensor(2, 3, 1), 1, 1), ContractError);
    EXPECT_THROW(combine_mfg(Tensor(2, 2, 1), Tensor(2, 2, 1), Tensor(2, 2, 1), Tensor(2, 2, 3), {}), ContractError);
}

TEST(Schedule, LinearAlphaBarIsStrictlyDecreasing) {
    const auto a = linear_alpha_bar();
    ASSERT_EQ(a.size(), 1000u);
    EXPECT_DOUBLE_EQ(a[0], 1.0 - 1e-4);
    for (std::size_t t = 1; t < a.size(); ++t) {
        EXPECT_LT(a[t], a[t - 1]);
        EXPECT_GT(a[t], 0.0);
    }
}

TEST(Sampler, Defaults) {
    const SamplerConfig cfg;
    EXPECT_EQ(cfg.steps, 20);
    EXPECT_EQ(cfg.t_min, 0.7);
    EXPECT_EQ(cfg.t_max, 0.98);
    EXPECT_EQ(cfg.t_start, 0.84);
}

TEST(Sampler, InvalidConfigsAreRejected) {
    SamplerConfig cfg;
    cfg.steps = -1;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.alpha_bar = {0.9, 0.95};
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.t_min = 0.9;
    cfg.t_max = 0.8;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(EditImage, ZeroStepsReturnsNoisedInput) {
    std::mt19937_64 rng(5);
    const auto x0 = random_tensor(4, 5, 3, rng);
    SamplerConfig cfg;
    cfg.steps = 0;
    CountingProvider p;
    const auto z = edit_image(p, cfg, x0, {});
    EXPECT_EQ(p.total, 0);
    const double a = cfg.alpha_bar[static_cast<std::size_t>(start_timestep(cfg, cfg.t_start))];
    // Recover the injected noise and check it looks standard normal.
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double n = (z[i] - std::sqrt(a) * x0[i]) / std::sqrt(1.0 - a);
        mean += n;
        var += n * n;
    }
    mean /= static_cast<double>(z.size());
    var /= static_cast<double>(z.size());
    EXPECT_LT(std::abs(mean), 0.5);
    EXPECT_GT(var, 0.3);
}

TEST(EditImage, FourQueriesPerStep) {
    CountingProvider p;
    SamplerConfig cfg;
    cfg.steps = 7;
    edit_image(p, cfg, Tensor(2, 2, 3), {});
    EXPECT_EQ(p.total, 28);
    EXPECT_EQ((p.counts[{ImageCondition::None, TextCondition::None}]), 7);
    EXPECT_EQ((p.counts[{ImageCondition::Fusion, TextCondition::None}]), 7);
    EXPECT_EQ((p.counts[{ImageCondition::Fusion, TextCondition::Prompt}]), 7);
    EXPECT_EQ((p.counts[{ImageCondition::Source, TextCondition::None}]), 7);
}

TEST(EditImage, TrueNoiseOracleReconstructs) {
    std::mt19937_64 rng(6);
    const auto x0 = random_tensor(8, 8, 3, rng, 0.0, 1.0);
    for (double t : {0.7, 0.75, 0.84, 0.9, 0.98}) {
        auto p = make_mock_provider(MockKind::TrueNoiseOracle, {});
        const auto out = edit_image(*p, oracle_config(t), x0, {0.0, 1.0, 0.0});
        EXPECT_LT(testutil::max_abs_diff(out, x0), 1e-4) << "t_start " << t;
    }
}

TEST(EditImage, RandomStartStaysInRangeAndReconstructs) {
    std::mt19937_64 rng(7);
    const auto x0 = random_tensor(4, 4, 3, rng, 0.0, 1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SamplerConfig cfg;
        cfg.randomize_t_start = true;
        cfg.rng_seed = seed;
        auto p = make_mock_provider(MockKind::TrueNoiseOracle, {});
        EXPECT_LT(testutil::max_abs_diff(edit_image(*p, cfg, x0, {0.0, 1.0, 0.0}), x0), 1e-4);
    }
}

TEST(EditImage, DeterministicForFixedSeed) {
    std::mt19937_64 rng(8);
    const auto x0 = random_tensor(6, 6, 3, rng);
    ProviderPayloads payloads;
    payloads.affine_default = {0.3, 0.1};
    payloads.affine[{ImageCondition::Fusion, TextCondition::Prompt}] = {0.5, -0.2};
    auto p1 = make_mock_provider(MockKind::AffineOfConditioning, payloads);
    auto p2 = make_mock_provider(MockKind::AffineOfConditioning, payloads);
    SamplerConfig cfg;
    cfg.randomize_t_start = true;
    cfg.rng_seed = 99;
    EXPECT_EQ(edit_image(*p1, cfg, x0, {}), edit_image(*p2, cfg, x0, {}));
    cfg.rng_seed = 100;
    EXPECT_NE(edit_image(*p1, cfg, x0, {}), edit_image(*p2, oracle_config(0.84), x0, {}));
}

TEST(EditImage, WrongShapeIsContractError) {
    WrongShapeProvider p;
    EXPECT_THROW(edit_image(p, SamplerConfig{}, Tensor(2, 2, 3), {}), ContractError);
}

TEST(EditImage, NonFiniteStepIsNumericError) {
    NanProvider p;
    try {
        edit_image(p, SamplerConfig{}, Tensor(2, 2, 3), {});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    }
}
