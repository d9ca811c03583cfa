#include <gtest/gtest.h>

#include <cmath>

#include "psnlab/sampling.hpp"
#include "psnlab/stats.hpp"

using namespace psnlab;

TEST(Neighborhood, ZeroIntensityIsEmpty) {
    ReferenceDistribution m(1, 4);
    auto sc = scaling(100, ShockDistribution());
    Rng rng(1);
    for (int k = 0; k < 100; ++k) EXPECT_TRUE(draw_neighborhood(m, sc, ShockDistribution(), rng).members.empty());
}

TEST(Neighborhood, MeanSizeEqualsMass) {
    ReferenceDistribution m(2, 3);
    m.at(0, 1, 0) = 0.5;
    m.at(1, 2, 0) = 1.5;
    m.at(1, 2, 1) = 1.0;
    m.at(0, 0, 1) = 1.0;
    auto sc = scaling(100, ShockDistribution());
    Rng rng(2);
    const int N = 100000;
    double s = 0, s2 = 0, type1 = 0, tot = 0;
    for (int k = 0; k < N; ++k) {
        auto nb = draw_neighborhood(m, sc, ShockDistribution(), rng);
        double r = nb.members.size();
        s += r;
        s2 += r * r;
        for (auto& q : nb.members) {
            type1 += q.x == 1;
            tot += 1;
            EXPECT_EQ(q.s0, q.x == 0 ? 1 : 2);
        }
    }
    double mean = s / N, se = std::sqrt((s2 / N - mean * mean) / N);
    EXPECT_NEAR(mean, 2.0, 3 * se);
    EXPECT_NEAR(type1 / tot, 0.75, 3 * std::sqrt(0.75 * 0.25 / tot));
}

TEST(PreLinkAcceptance, ConditionalProbability) {
    ShockDistribution g;
    double u = 0.2, ub = 0.5, mc = 1.0, sigma = 0.8;
    double direct = g.survival((mc - u) / sigma) / g.survival((mc - ub) / sigma);
    EXPECT_NEAR(pre_link_acceptance(u, ub, mc, sigma, g), direct, 1e-15);
    EXPECT_DOUBLE_EQ(pre_link_acceptance(ub, ub, mc, sigma, g), 1.0);
}

TEST(EventProbability, FullSupportIsOne) {
    auto model = PayoffModel::constant(0.2, 4);
    auto st = solve_joint(model).state;
    MomentSpec sp;
    sp.event = SubnetworkEvent::full_support(3);
    auto p = simulate_event_prob(st, sp, {0, 0, 0}, model, 100, 200, 1);
    EXPECT_DOUBLE_EQ(p.value, 1.0);
}

TEST(EventProbability, OversizedIntensityIsRejected) {
    // Ū bounds |U*|, so strongly negative payoffs give pre-network intensity e^{2|c|}.
    auto model = PayoffModel::constant(-60.0, 4);
    auto st = solve_joint(model).state;
    MomentSpec sp;
    EXPECT_THROW(simulate_event_prob(st, sp, {0, 0}, model, 100, 500, 1), DomainError);
}

TEST(EventProbability, SingleLinkMatchesLinkRate) {
    // Constant payoffs: the pair links iff both sides accept, so the probability is
    // E[S((MC_1 - c)/sigma)] E[S((MC_2 - c)/sigma)] regardless of the neighborhoods.
    auto model = PayoffModel::constant(0.3, 4);
    auto st = solve_joint(model).state;
    const int n = 200;
    auto sc = scaling(n, model.shock);
    double acc = 0.0;
    const int G = 200000;
    for (int k = 0; k < G; ++k) {
        double mc = marginal_cost_at(sc, model.shock, (k + 0.5) / G);
        acc += model.shock.survival((mc - 0.3) / sc.sigma_n);
    }
    double p1 = acc / G;
    MomentSpec sp;
    auto p = simulate_event_prob(st, sp, {0, 0}, model, n, 20000, 3);
    EXPECT_NEAR(p.value, p1 * p1, 4 * p.se + 1e-6);
}

TEST(Stats, MomentsAndMedian) {
    std::vector<double> v{1, 2, 3, 4, 10};
    EXPECT_DOUBLE_EQ(mean(v), 4.0);
    EXPECT_DOUBLE_EQ(variance(v), 12.5);
    EXPECT_DOUBLE_EQ(median(v), 3.0);
    EXPECT_DOUBLE_EQ(median({1, 2, 3, 4}), 2.5);
}

TEST(Stats, OmnibusMatchesReference) {
    // Reference values from an established implementation on the same data.
    std::vector<double> x;
    for (int i = 1; i <= 50; ++i) {
        double f = std::fmod(i * 0.37, 1.0);
        x.push_back(f * f);
    }
    auto s = summarize(x);
    EXPECT_NEAR(s.skewness, 0.6708356887331159, 1e-10);
    EXPECT_NEAR(s.excess_kurtosis, -0.7831410813275168, 1e-10);
    auto r = omnibus_normality(x);
    EXPECT_NEAR(r.statistic, 6.132901957935404, 1e-9);
    EXPECT_NEAR(r.p_value, 0.04658619720851823, 1e-10);
    EXPECT_THROW(omnibus_normality(std::vector<double>(10, 1.0)), DomainError);
}

TEST(Stats, OmnibusAcceptsGaussianSample) {
    Rng rng(4);
    std::vector<double> x(5000);
    for (auto& v : x) v = normal01(rng);
    EXPECT_GT(omnibus_normality(x).p_value, 0.01);
    std::vector<double> e(5000);
    for (auto& v : e) v = exponential1(rng);
    EXPECT_LT(omnibus_normality(e).p_value, 1e-6);
}

TEST(Stats, ChiSquare) {
    EXPECT_NEAR(chi_square_sf(7.3, 3), 0.06292623645904312, 1e-12);
    EXPECT_NEAR(chi_square_sf(0.5, 1), 0.47950012218695337, 1e-12);
    auto r = chi_square_homogeneity({{10, 20, 30, 0}, {15, 15, 30, 0}});
    EXPECT_NEAR(r.statistic, 1.7142857142857144, 1e-12);
    EXPECT_DOUBLE_EQ(r.df, 2.0);
    EXPECT_NEAR(r.p_value, 0.42437284567695, 1e-12);
}

TEST(Stats, LogLogSlope) {
    std::vector<double> x{100, 400, 1600}, y;
    for (double v : x) y.push_back(3.0 / std::sqrt(v));
    EXPECT_NEAR(loglog_slope(x, y), -0.5, 1e-12);
}
