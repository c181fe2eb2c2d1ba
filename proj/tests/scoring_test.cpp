#include "mmood/error.hpp"
#include "mmood/scoring.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace mmood {
namespace {

std::vector<double> random_similarities(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> s(n);
    for (double& x : s) {
        x = u(rng);
    }
    return s;
}

TEST(SimilarityVector, Examples)
{
    std::vector<Embedding> labels{Embedding({1, 0}), Embedding({0, 1})};
    auto const sv = similarity_vector(Embedding({1, 0}), labels, 2, 0);
    EXPECT_EQ(sv.values, (std::vector<double>{1.0, 0.0}));

    labels.push_back(Embedding({0.70711, 0.70711}));
    auto const sv2 = similarity_vector(Embedding({0.6, 0.8}), labels, 2, 1);
    EXPECT_NEAR(sv2.values[0], 0.6, 1e-12);
    EXPECT_NEAR(sv2.values[1], 0.8, 1e-12);
    EXPECT_NEAR(sv2.values[2], 0.98995, 1e-5);
    EXPECT_EQ(sv2.id().size(), 2u);
    EXPECT_EQ(sv2.outlier().size(), 1u);

    try {
        (void)similarity_vector(Embedding({1, 0}), {}, 0, 0);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::LengthMismatch);
    }
    try {
        (void)similarity_vector(Embedding({1, 0, 0}), labels, 2, 1);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::DimensionMismatch);
    }
}

TEST(MmoodScore, Examples)
{
    ScoringConfig const cfg;
    EXPECT_EQ(mmood_score(std::vector<double>{0.37}, 1, cfg), 1.0);
    EXPECT_NEAR(mmood_score(std::vector<double>{1, 0, 0}, 2, cfg), 0.523131, 1e-6);
    EXPECT_NEAR(mmood_score(std::vector<double>{0, 0, 1}, 2, cfg), 0.067913, 1e-6);
}

TEST(MmoodScore, Errors)
{
    ScoringConfig cfg;
    EXPECT_THROW((void)mmood_score(std::vector<double>{}, 1, cfg), Error);
    cfg.beta = std::numeric_limits<double>::infinity();
    try {
        (void)mmood_score(std::vector<double>{0.1, 0.2}, 1, cfg);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::InvalidConfig);
    }
}

TEST(MmoodScore, ShiftInvariant)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> shift(-5.0, 5.0);
    ScoringConfig const cfg;
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t const k = 1 + trial % 7;
        auto s = random_similarities(rng, k + trial % 5);
        double const base = mmood_score(s, k, cfg);
        double const c = shift(rng);
        for (double& x : s) {
            x += c;
        }
        EXPECT_NEAR(mmood_score(s, k, cfg), base, 1e-9);
    }
}

TEST(MmoodScore, NoOutliersEqualsMcm)
{
    std::mt19937_64 rng(2);
    ScoringConfig const cfg;
    for (int trial = 0; trial < 2000; ++trial) {
        auto const s = random_similarities(rng, 1 + trial % 9);
        EXPECT_EQ(mmood_score(s, s.size(), cfg), mcm_score(s, s.size(), cfg));
    }
}

TEST(MmoodScore, ZeroBetaIsFullDenominatorMaxSoftmax)
{
    std::mt19937_64 rng(3);
    ScoringConfig cfg;
    cfg.beta = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t const k = 1 + trial % 6;
        auto const s = random_similarities(rng, k + 1 + trial % 4);
        auto const p = oracle::softmax_naive(s);
        double const expected = *std::max_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k));
        EXPECT_NEAR(mmood_score(s, k, cfg), expected, 1e-12);
    }
}

TEST(MmoodScore, RaisingAnOutlierNeverRaisesANonNegativeScore)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> bump(0.0, 0.5);
    ScoringConfig const cfg;
    int checked = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::size_t const k = 1 + trial % 5;
        auto s = random_similarities(rng, k + 1 + trial % 4);
        double const before = mmood_score(s, k, cfg);
        if (before < 0.0) {
            continue;
        }
        std::size_t const j = k + static_cast<std::size_t>(rng() % (s.size() - k));
        s[j] = std::min(1.0, s[j] + bump(rng));
        EXPECT_LE(mmood_score(s, k, cfg), before + 1e-15);
        ++checked;
    }
    EXPECT_GT(checked, 5000);
}

TEST(MmoodScore, NegativeScoreCanRiseWithANonMaximalOutlier)
{
    // With beta * max outlier share above the max ID share, a larger
    // denominator shrinks the negative score towards zero.
    ScoringConfig const cfg;
    double const before = mmood_score(std::vector<double>{-1.0, 1.0, 0.0}, 1, cfg);
    double const after = mmood_score(std::vector<double>{-1.0, 1.0, 0.5}, 1, cfg);
    EXPECT_NEAR(before, -0.076279665773325, 1e-12);
    EXPECT_NEAR(after, -0.065828669093353, 1e-12);
    EXPECT_GT(after, before);
}

TEST(McmScore, Examples)
{
    ScoringConfig const cfg;
    EXPECT_NEAR(mcm_score(std::vector<double>{1, 0}, 2, cfg), 0.731059, 1e-6);
    EXPECT_EQ(mcm_score(std::vector<double>{0.5, 0.5}, 2, cfg), 0.5);
    EXPECT_EQ(mcm_score(std::vector<double>{0.9}, 1, cfg), 1.0);
    // Entries past K are ignored.
    EXPECT_EQ(mcm_score(std::vector<double>{1, 0, 0.99}, 2, cfg), mcm_score(std::vector<double>{1, 0}, 2, cfg));
    EXPECT_THROW((void)mcm_score(std::vector<double>{1}, 2, cfg), Error);
}

TEST(MaxLogitScore, Examples)
{
    ScoringConfig cfg;
    EXPECT_DOUBLE_EQ(maxlogit_score(std::vector<double>{0.3, 0.7}, 2, cfg), 70.0);
    EXPECT_EQ(maxlogit_score(std::vector<double>{0.0}, 1, cfg), 0.0);
    cfg.logit_scale = 1.0;
    EXPECT_EQ(maxlogit_score(std::vector<double>{-0.2, -0.1}, 2, cfg), -0.1);
}

TEST(EnergyScore, Examples)
{
    ScoringConfig cfg;
    cfg.logit_scale = 1.0;
    EXPECT_NEAR(energy_score(std::vector<double>{0.42}, 1, cfg), 0.42, 1e-15);
    EXPECT_NEAR(energy_score(std::vector<double>{0, 0}, 2, cfg), 0.693147, 1e-6);
    EXPECT_NEAR(energy_score(std::vector<double>{1, 0}, 2, cfg), 1.313262, 1e-6);
}

TEST(EnergyScore, StableAtLargeScale)
{
    std::mt19937_64 rng(5);
    ScoringConfig cfg;
    cfg.logit_scale = 1000.0;
    for (int trial = 0; trial < 500; ++trial) {
        auto const s = random_similarities(rng, 1 + trial % 50);
        EXPECT_TRUE(std::isfinite(energy_score(s, s.size(), cfg)));
        EXPECT_TRUE(std::isfinite(mcm_score(s, s.size(), cfg)));
        EXPECT_TRUE(std::isfinite(mmood_score(s, 1, cfg)));
    }
    // log-sum-exp bounds: max <= energy <= max + T log K.
    auto const s = std::vector<double>{1.0, 1.0, -1.0};
    double const e = energy_score(s, 3, cfg);
    EXPECT_GE(e, 1000.0);
    EXPECT_LE(e, 1000.0 + std::log(3.0) + 1e-9);
}

TEST(ScoringConfig, PerMethodDefaults)
{
    ScoringConfig const cfg;
    EXPECT_EQ(cfg.beta, 0.25);
    EXPECT_EQ(cfg.temperature, 1.0);
    EXPECT_EQ(cfg.logit_scale_for(Method::mmood), 1.0);
    EXPECT_EQ(cfg.logit_scale_for(Method::mcm), 1.0);
    EXPECT_EQ(cfg.logit_scale_for(Method::maxlogit), 100.0);
    EXPECT_EQ(cfg.logit_scale_for(Method::energy), 100.0);
}

TEST(ScoringConfig, TemperatureSharpensSoftmax)
{
    ScoringConfig cfg;
    cfg.temperature = 0.5;
    // softmax([2, 0]) max share.
    EXPECT_NEAR(mcm_score(std::vector<double>{1, 0}, 2, cfg), std::exp(2.0) / (std::exp(2.0) + 1.0), 1e-15);
    cfg.temperature = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(LabelSet, Invariants)
{
    LabelSet const ok({"husky dog", "beagle"}, {"gray wolf"});
    EXPECT_EQ(ok.all(), (std::vector<std::string>{"husky dog", "beagle", "gray wolf"}));
    EXPECT_THROW(LabelSet({}, {}), Error);
    EXPECT_THROW(LabelSet({"a", " "}, {}), Error);
    EXPECT_THROW(LabelSet({"Husky Dog"}, {"husky dog"}), Error);
    EXPECT_THROW(LabelSet({"a"}, {"b", "B"}), Error);
}

TEST(Method, NamesRoundTrip)
{
    for (Method m : {Method::mmood, Method::mcm, Method::maxlogit, Method::energy}) {
        EXPECT_EQ(parse_method(to_string(m)), m);
    }
    EXPECT_FALSE(parse_method("msp").has_value());
}

} // namespace
} // namespace mmood
