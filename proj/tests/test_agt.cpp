#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gsedit/agt.hpp"
#include "gsedit/error.hpp"
#include "gsedit/synthetic.hpp"
#include "oracles/attention_oracle.hpp"
#include "test_util.hpp"

using namespace gsedit;

namespace {

Tensor map_of(int h, int w, std::initializer_list<double> values) {
    Tensor t(h, w, 1);
    std::size_t i = 0;
    for (double v : values) t[i++] = v;
    return t;
}

GaussianCloud cloud_of(std::size_t n) {
    GaussianCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.push_back({static_cast<double>(i), 0, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-3),
                    Eigen::Vector3d::Zero(), 0.0);
    }
    return c;
}

std::pair<GaussianCloud, std::vector<CameraView>> attention_scene(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.count = 90;
    spec.width = spec.height = 20;
    spec.camera_count = 3;
    spec.seed = seed;
    return make_synthetic_scene(spec);
}

AttentionStack random_stack(const std::vector<CameraView>& cams, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<RawAttention> raw;
    for (const auto& c : cams) {
        raw.push_back({c.id, {testutil::random_tensor(c.height / 2, c.width / 2, 1, rng, 0.0, 3.0),
                              testutil::random_tensor(c.height, c.width, 1, rng, 0.0, 3.0)}});
    }
    return normalize_attention(raw, cams[0].height, cams[0].width);
}

}  // namespace

TEST(Resize, IdentityAtSameSize) {
    std::mt19937_64 rng(1);
    const auto m = testutil::random_tensor(5, 7, 1, rng);
    EXPECT_EQ(resize_bilinear(m, 5, 7), m);
}

TEST(Resize, UpsamplingTwoPixels) {
    // Half-pixel centers: output x samples input at (x + 0.5) / 2 - 0.5.
    const auto out = resize_bilinear(map_of(1, 2, {0.0, 1.0}), 1, 4);
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_DOUBLE_EQ(out[1], 0.25);
    EXPECT_DOUBLE_EQ(out[2], 0.75);
    EXPECT_DOUBLE_EQ(out[3], 1.0);
}

TEST(Normalize, MinMax) {
    const auto s = normalize_attention({{"a", {map_of(1, 2, {0.2, 0.8})}}}, 1, 2);
    ASSERT_EQ(s.view_ids, std::vector<std::string>{"a"});
    EXPECT_EQ(s.maps[0][0], 0.0);
    EXPECT_EQ(s.maps[0][1], 1.0);
}

TEST(Normalize, ConstantMapBecomesZeros) {
    const auto s = normalize_attention({{"a", {Tensor(3, 3, 1, 0.4)}}}, 3, 3);
    for (double v : s.maps[0].values()) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, AveragesBeforeNormalizing) {
    const auto s = normalize_attention({{"a", {map_of(1, 2, {0.0, 1.0}), map_of(1, 2, {1.0, 0.0})}}}, 1, 2);
    EXPECT_EQ(s.maps[0][0], 0.0);
    EXPECT_EQ(s.maps[0][1], 0.0);
}

TEST(Normalize, ResizesToTarget) {
    std::mt19937_64 rng(2);
    const auto s = normalize_attention({{"a", {testutil::random_tensor(4, 4, 1, rng)}}}, 9, 13);
    EXPECT_EQ(s.maps[0].height(), 9);
    EXPECT_EQ(s.maps[0].width(), 13);
    const auto [lo, hi] = std::minmax_element(s.maps[0].values().begin(), s.maps[0].values().end());
    EXPECT_EQ(*lo, 0.0);
    EXPECT_EQ(*hi, 1.0);
}

TEST(Normalize, EmptyMapListIsContractError) {
    EXPECT_THROW(normalize_attention({{"a", {}}}, 2, 2), ContractError);
}

TEST(Accumulate, PooledMeanHandExample) {
    AttentionStack stack{{"a", "b"}, {Tensor(4, 10, 1, 0.2), Tensor(4, 10, 1, 0.6)}};
    std::vector<RenderOutput> renders(2);
    for (int v = 0; v < 2; ++v) {
        renders[v].contribs.assign(1, {});
        for (int p = 0; p < (v == 0 ? 10 : 30); ++p) renders[v].contribs[0].push_back({p, 0.5, 1.0});
    }
    EXPECT_EQ(pool_attention(1, renders, stack)[0], 0.5);
}

TEST(Accumulate, ConstantAttentionGivesThatConstant) {
    const auto [cloud, cams] = attention_scene(3);
    AttentionStack stack;
    for (const auto& c : cams) {
        stack.view_ids.push_back(c.id);
        stack.maps.emplace_back(c.height, c.width, 1, 0.375);
    }
    const auto w = accumulate_attention(cloud, cams, stack);
    for (double v : w) EXPECT_TRUE(v == 0.375 || v == 0.0) << v;
    EXPECT_GT(std::count(w.begin(), w.end(), 0.375), 0);
}

TEST(Accumulate, InvisibleGaussianGetsZero) {
    auto [cloud, cams] = attention_scene(4);
    cloud.push_back({0, 1000, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-3), Eigen::Vector3d::Zero(), 0.0);
    AttentionStack stack;
    for (const auto& c : cams) {
        stack.view_ids.push_back(c.id);
        stack.maps.emplace_back(c.height, c.width, 1, 1.0);
    }
    EXPECT_EQ(accumulate_attention(cloud, cams, stack).back(), 0.0);
}

TEST(Accumulate, MatchesOracleAndStaysInUnitInterval) {
    for (std::uint64_t seed : {5u, 6u}) {
        const auto [cloud, cams] = attention_scene(seed);
        const auto stack = random_stack(cams, seed);
        const auto w = accumulate_attention(cloud, cams, stack);
        const auto expected = oracle::oracle_attention(cloud, cams, stack.maps);
        for (std::size_t j = 0; j < w.size(); ++j) {
            EXPECT_NEAR(w[j], expected[j], 1e-9);
            EXPECT_GE(w[j], 0.0);
            EXPECT_LE(w[j], 1.0);
        }
    }
}

TEST(Accumulate, FollowsGaussianIdentityUnderPermutation) {
    const auto [cloud, cams] = attention_scene(7);
    const auto stack = random_stack(cams, 7);
    std::vector<std::size_t> perm(cloud.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(7);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto w = accumulate_attention(cloud, cams, stack);
    const auto wp = accumulate_attention(select_rows(cloud, perm), cams, stack);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(wp[i], w[perm[i]], 1e-12);
}

TEST(Accumulate, ResolutionMismatchIsContractError) {
    const auto [cloud, cams] = attention_scene(8);
    AttentionStack stack;
    for (const auto& c : cams) {
        stack.view_ids.push_back(c.id);
        stack.maps.emplace_back(c.height + 1, c.width, 1, 0.5);
    }
    EXPECT_THROW(accumulate_attention(cloud, cams, stack), ContractError);
}

TEST(Threshold, Example) {
    const auto r = threshold_weights({0.05, 0.1, 0.5}, 0.1);
    EXPECT_EQ(r.weights, (std::vector<double>{0.0, 0.1, 0.5}));
    EXPECT_EQ(r.frozen, (std::vector<bool>{true, false, false}));
}

TEST(Threshold, AllBelowAreFrozen) {
    EXPECT_EQ(threshold_weights({0.01, 0.02}, 0.1).frozen, (std::vector<bool>{true, true}));
}

TEST(Threshold, ZeroThresholdFreezesOnlyZeroWeights) {
    const auto r = threshold_weights({0.0, 0.3}, 0.0);
    EXPECT_EQ(r.weights, (std::vector<double>{0.0, 0.3}));
    // The freeze mask marks w' == 0, so a zero weight stays frozen.
    EXPECT_EQ(r.frozen, (std::vector<bool>{true, false}));
}

TEST(Threshold, IdempotentAndMonotone) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(500);
    for (double& v : w) v = u(rng);
    for (double t : {0.0, 0.1, 0.35, 0.8}) {
        const auto once = threshold_weights(w, t);
        const auto twice = threshold_weights(once.weights, t);
        EXPECT_EQ(once.weights, twice.weights);
        EXPECT_EQ(once.frozen, twice.frozen);
        const auto higher = threshold_weights(w, t + 0.1);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (once.frozen[i]) EXPECT_TRUE(higher.frozen[i]);
        }
    }
}

TEST(Prune, DistinctWeightsRemoveExactlyTopK) {
    std::vector<double> w(1000);
    std::iota(w.begin(), w.end(), 1.0);
    std::mt19937_64 rng(10);
    std::shuffle(w.begin(), w.end(), rng);
    for (double& v : w) v /= 1000.0;
    const auto r = prune_topk(cloud_of(1000), w, 10.0);
    ASSERT_EQ(r.pruned.size(), 100u);
    EXPECT_EQ(r.cloud.size(), 900u);
    for (std::size_t i : r.pruned) EXPECT_GT(w[i], 0.9);
    EXPECT_TRUE(std::is_sorted(r.pruned.begin(), r.pruned.end()));
    EXPECT_EQ(r.threshold, 0.901);
}

TEST(Prune, PaperScaleCount) { EXPECT_EQ(topk_count(864000, 0.15), 1296u); }

TEST(Prune, TiesAtThresholdArePruned) {
    const auto r = prune_topk(cloud_of(4), {0.9, 0.9, 0.1, 0.1}, 25.0);
    EXPECT_EQ(r.threshold, 0.9);
    EXPECT_EQ(r.pruned, (std::vector<std::size_t>{0, 1}));
}

TEST(Prune, ZeroKWithZeroWeightsPrunesNothing) {
    EXPECT_TRUE(prune_topk(cloud_of(5), std::vector<double>(5, 0.0), 0.0).pruned.empty());
    EXPECT_TRUE(prune_topk(cloud_of(5), std::vector<double>(5, 0.0), 50.0).pruned.empty());
}

TEST(Prune, SurvivorsKeepOrderAndWeights) {
    auto cloud = cloud_of(6);
    const std::vector<double> w{0.1, 0.9, 0.2, 0.8, 0.3, 0.05};
    cloud.attention_weights = w;
    const auto r = prune_topk(cloud, w, 34.0);  // ceil(2.04) = 3
    EXPECT_EQ(r.pruned, (std::vector<std::size_t>{1, 3, 4}));
    ASSERT_EQ(r.cloud.size(), 3u);
    EXPECT_EQ(r.cloud.positions[1].x(), 2.0);
    EXPECT_EQ(*r.cloud.attention_weights, (std::vector<double>{0.1, 0.2, 0.05}));
}

TEST(Prune, MonotoneInKAndNeverBelowThreshold) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> level(0, 40);
    std::vector<double> w(400);
    for (double& v : w) v = level(rng) / 40.0;
    const auto cloud = cloud_of(w.size());
    std::vector<std::size_t> previous;
    for (double k : {0.0, 0.15, 1.0, 5.0, 12.5, 50.0, 100.0}) {
        const auto r = prune_topk(cloud, w, k);
        EXPECT_TRUE(std::includes(r.pruned.begin(), r.pruned.end(), previous.begin(), previous.end())) << k;
        for (std::size_t i : r.pruned) EXPECT_GE(w[i], r.threshold);
        std::size_t positive = 0;
        for (double v : w) positive += v > 0.0;
        EXPECT_GE(r.pruned.size(), std::min(topk_count(w.size(), k), positive));
        previous = r.pruned;
    }
}

TEST(Prune, OutOfRangeKIsContractError) {
    EXPECT_THROW(prune_topk(cloud_of(2), {0.1, 0.2}, 150.0), ContractError);
    EXPECT_THROW(prune_topk(cloud_of(2), {0.1, 0.2}, -1.0), ContractError);
    EXPECT_THROW(prune_topk(cloud_of(2), {0.1}, 10.0), ContractError);
}
