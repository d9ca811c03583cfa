#include <gtest/gtest.h>

#include <cmath>

#include "psnlab/model.hpp"
#include "psnlab/rng.hpp"

using namespace psnlab;

TEST(Scaling, SquareRootProposerCount) {
    EXPECT_EQ(scaling(100, ShockDistribution(ShockFamily::gumbel)).j_n, 10);
    EXPECT_EQ(scaling(100, ShockDistribution(ShockFamily::exponential)).j_n, 10);
    EXPECT_EQ(scaling(2, ShockDistribution()).j_n, 1);
    EXPECT_EQ(scaling(1600, ShockDistribution()).j_n, 40);
    // sqrt(42.25) = 6.5 rounds half up
    EXPECT_EQ(round_half_up(6.5), 7);
}

TEST(Scaling, ExponentialScaleIsOne) {
    ShockDistribution e(ShockFamily::exponential);
    for (int n : {2, 10, 100, 12345}) {
        auto sc = scaling(n, e);
        EXPECT_DOUBLE_EQ(sc.sigma_n, 1.0);
        EXPECT_NEAR(sc.b_n, 0.5 * std::log(static_cast<double>(n)), 1e-12);
    }
}

TEST(Scaling, GumbelMatchesClosedForm) {
    ShockDistribution g(ShockFamily::gumbel);
    for (int n : {4, 100, 1600}) {
        auto sc = scaling(n, g);
        double p = 1.0 / std::sqrt(static_cast<double>(n));
        double b = -std::log(-std::log1p(-p));
        double G = std::exp(-std::exp(-b));
        double dens = std::exp(-b) * G;
        EXPECT_NEAR(sc.b_n, b, 1e-10);
        EXPECT_NEAR(sc.sigma_n, dens / (1.0 - G), 1e-10);
    }
}

TEST(Scaling, RejectsSmallN) {
    EXPECT_THROW(scaling(1, ShockDistribution()), DomainError);
    EXPECT_THROW(scaling(0, ShockDistribution()), DomainError);
}

TEST(Shock, QuantileInvertsCdf) {
    for (auto fam : {ShockFamily::gumbel, ShockFamily::exponential}) {
        ShockDistribution d(fam);
        for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
            EXPECT_NEAR(d.cdf(d.quantile(p)), p, 1e-12);
            EXPECT_NEAR(d.survival(d.upper_quantile(p)), p, 1e-12);
        }
        EXPECT_NEAR(d.cdf(1.0) + d.survival(1.0), 1.0, 1e-15);
    }
}

TEST(Shock, TruncatedDrawsStayAbove) {
    Rng rng(3);
    for (auto fam : {ShockFamily::gumbel, ShockFamily::exponential}) {
        ShockDistribution d(fam);
        for (int k = 0; k < 1000; ++k) EXPECT_GE(d.sample_above(2.5, rng), 2.5);
    }
}

TEST(MarginalCost, DistributionIsMaxOfJ) {
    // Empirical CDF of the inversion sampler against G(m/sigma)^J at a few points.
    ShockDistribution g(ShockFamily::gumbel);
    auto sc = scaling(400, g);
    Rng rng(11);
    const int N = 40000;
    std::vector<double> v(N);
    for (auto& x : v) x = draw_marginal_cost(sc, g, rng);
    for (double m : {1.5, 3.0, 4.5}) {
        double emp = std::count_if(v.begin(), v.end(), [&](double x) { return x <= m; }) / double(N);
        double direct = std::pow(std::exp(-std::exp(-m / sc.sigma_n)), sc.j_n);
        EXPECT_NEAR(emp, direct, 4.0 * std::sqrt(direct * (1 - direct) / N) + 1e-9);
        EXPECT_NEAR(marginal_cost_cdf(sc, g, m), direct, 1e-12);
    }
}

TEST(TypeSpaceTest, Validation) {
    TypeSpace ok{{0, 1}, {0.25, 0.75}};
    EXPECT_NO_THROW(ok.validate());
    EXPECT_THROW((TypeSpace{{0, 1}, {0.5, 0.6}}.validate()), DomainError);
    EXPECT_THROW((TypeSpace{{0, 0}, {0.5, 0.5}}.validate()), DomainError);
    EXPECT_THROW((TypeSpace{{0, 1}, {-0.5, 1.5}}.validate()), DomainError);
}

TEST(StatisticSpecTest, SupportAndClamp) {
    StatisticSpec s;
    s.cap = 3;
    EXPECT_EQ(s.support(), (std::vector<double>{0, 1, 2, 3}));
    EXPECT_DOUBLE_EQ(s.clamp_count(7), 3.0);
    EXPECT_EQ(s.index_of(2.0), 2);
    EXPECT_EQ(s.index_of(2.5), -1);
    StatisticSpec c;
    c.kind = StatKind::composition_share;
    c.cap = 4;
    EXPECT_EQ(c.support().size(), 5u);
    EXPECT_DOUBLE_EQ(c.share(1, 3), 0.25);  // 1/3 rounds to the 1/4 grid
    EXPECT_DOUBLE_EQ(c.share(0, 0), 0.0);
}

TEST(Payoff, UpperBoundIsMaxAbs) {
    StatisticSpec st;
    st.cap = 3;
    LinearIndex li;
    li.c0 = -0.5;
    li.s2 = 0.4;
    li.s = -0.2;
    auto m = PayoffModel::linear(TypeSpace{}, st, li);
    double best = 0.0;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; b <= 3; ++b) best = std::max(best, std::abs(-0.5 - 0.2 * a + 0.4 * b));
    EXPECT_DOUBLE_EQ(m.u_bar(), best);
    m.set_theta({1.0, 0, 0, 0, 0, 0, 0});
    EXPECT_DOUBLE_EQ(m.u_bar(), 1.0);
}

TEST(Payoff, CheckedEvaluation) {
    auto m = PayoffModel::example_degree_complement(4);
    EXPECT_DOUBLE_EQ(evaluate_payoff(m, 0, 0, 1.0, 3.0), 2.0);
    EXPECT_THROW(evaluate_payoff(m, 1, 0, 1.0, 1.0), DomainError);
    EXPECT_THROW(evaluate_payoff(m, 0, 0, 1.5, 1.0), DomainError);
    EXPECT_THROW(evaluate_payoff(m, 0, 0, 5.0, 1.0), DomainError);
}

TEST(Payoff, TableForm) {
    StatisticSpec st;
    st.cap = 1;
    TypeSpace ts{{0, 1}, {0.5, 0.5}};
    std::vector<double> tab(16);
    for (int k = 0; k < 16; ++k) tab[k] = 0.1 * k - 0.8;
    auto m = PayoffModel::table(ts, st, tab);
    // index ((x K + x') S + s) S + s'
    EXPECT_DOUBLE_EQ(m.u(1, 0, 1.0, 0.0), tab[((1 * 2 + 0) * 2 + 1) * 2 + 0]);
    EXPECT_DOUBLE_EQ(m.u_bar(), 0.8);
    EXPECT_THROW(PayoffModel::table(ts, st, std::vector<double>(5)), DomainError);
}

TEST(Rng, DerivedStreamsDiffer) {
    EXPECT_NE(derive_seed("a", 1, {1}), derive_seed("a", 1, {2}));
    EXPECT_NE(derive_seed("a", 1, {1}), derive_seed("b", 1, {1}));
    EXPECT_NE(derive_seed("a", 1, {1}), derive_seed("a", 2, {1}));
    EXPECT_EQ(derive_seed("a", 1, {1, 2}), derive_seed("a", 1, {1, 2}));
    Rng r(5);
    for (int k = 0; k < 1000; ++k) {
        double u = uniform01(r);
        EXPECT_GT(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Scaling, FourNodeValues) {
    auto e = scaling(4, ShockDistribution(ShockFamily::exponential));
    EXPECT_NEAR(e.b_n, std::log(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(e.sigma_n, 1.0);
    auto g = scaling(4, ShockDistribution(ShockFamily::gumbel));
    EXPECT_NEAR(g.b_n, -std::log(std::log(2.0)), 1e-12);
    // G(b) = 1/2, g(b) = e^{-b}/2 = log(2)/2, a(b) = 1/log 2
    EXPECT_NEAR(g.sigma_n, std::log(2.0), 1e-12);
}

TEST(MarginalCost, SingleDrawIsScaledShock) {
    ShockDistribution g(ShockFamily::gumbel);
    auto sc = scaling(2, g);
    ASSERT_EQ(sc.j_n, 1);
    Rng rng(2);
    const int N = 100000;
    double s = 0;
    for (int k = 0; k < N; ++k) s += draw_marginal_cost(sc, g, rng);
    // mean of sigma * Gumbel = sigma * Euler gamma; sd = sigma pi / sqrt 6
    double se = sc.sigma_n * M_PI / std::sqrt(6.0) / std::sqrt(double(N));
    EXPECT_NEAR(s / N, sc.sigma_n * 0.5772156649015329, 3 * se);
}

TEST(MarginalCost, GumbelMaxOfTen) {
    ShockDistribution g(ShockFamily::gumbel);
    auto sc = scaling(100, g);
    Rng rng(7);
    const int N = 1000000;
    double s = 0;
    for (int k = 0; k < N; ++k) s += draw_marginal_cost(sc, g, rng);
    double se = sc.sigma_n * M_PI / std::sqrt(6.0) / std::sqrt(double(N));
    EXPECT_NEAR(s / N, sc.sigma_n * (std::log(10.0) + 0.5772156649015329), 3 * se);
}

TEST(MarginalCost, ExponentialHarmonicNumber) {
    ShockDistribution e(ShockFamily::exponential);
    auto sc = scaling(16, e);
    ASSERT_EQ(sc.j_n, 4);
    Rng rng(8);
    const int N = 400000;
    double s = 0, s2 = 0;
    for (int k = 0; k < N; ++k) {
        double v = draw_marginal_cost(sc, e, rng);
        s += v;
        s2 += v * v;
    }
    double m = s / N, se = std::sqrt((s2 / N - m * m) / N);
    EXPECT_NEAR(m, 1 + 0.5 + 1.0 / 3 + 0.25, 3 * se);
}

TEST(Payoff, ExampleAndConstant) {
    auto m = PayoffModel::example_degree_complement(4);
    EXPECT_DOUBLE_EQ(evaluate_payoff(m, 0, 0, 0.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(evaluate_payoff(m, 0, 0, 2.0, 0.0), -1.0);
    auto c = PayoffModel::constant(0.3, 5);
    for (double s : {0.0, 2.0, 5.0})
        for (double s2 : {0.0, 3.0}) EXPECT_DOUBLE_EQ(evaluate_payoff(c, 0, 0, s, s2), 0.3);
}
