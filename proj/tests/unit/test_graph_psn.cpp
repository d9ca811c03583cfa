#include <gtest/gtest.h>

#include <algorithm>

#include "psnlab/graph.hpp"
#include "psnlab/psn.hpp"

using namespace psnlab;

namespace {

ShockRealization fixed_shocks(int n, double mc, double eps) {
    ShockRealization s;
    s.n = n;
    s.sigma = 1.0;
    s.mc.assign(n, mc);
    s.epsilon.assign(static_cast<std::size_t>(n) * n, eps);
    return s;
}

// Independent stability check: degrees recomputed from an adjacency matrix.
bool brute_stable(const std::vector<std::vector<int>>& A, const PayoffModel& m,
                  const ShockRealization& s) {
    const int n = static_cast<int>(A.size());
    auto deg_with = [&](int i, int j) {
        int d = 0;
        for (int k = 0; k < n; ++k) d += A[i][k];
        if (!A[i][j]) ++d;
        return std::min(d, m.node_stat.cap);
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double si = deg_with(i, j), sj = deg_with(j, i);
            bool a = m.u(0, 0, si, sj) + s.sigma * s.eps(i, j) > s.mc[i];
            bool b = m.u(0, 0, sj, si) + s.sigma * s.eps(j, i) > s.mc[j];
            if ((a && b) != static_cast<bool>(A[i][j])) return false;
        }
    return true;
}

}  // namespace

TEST(Network, BasicOperations) {
    UndirectedNetwork L(4);
    EXPECT_TRUE(L.add_edge(0, 2));
    EXPECT_FALSE(L.add_edge(2, 0));
    EXPECT_TRUE(L.has_edge(2, 0));
    EXPECT_EQ(L.edge_count(), 1u);
    EXPECT_THROW(L.add_edge(1, 1), DomainError);
    EXPECT_TRUE(L.remove_edge(0, 2));
    EXPECT_EQ(L.edge_count(), 0u);
}

TEST(Network, StableFromProposals) {
    ProposalNetwork D(3);
    D.set(0, 1, true);
    D.set(1, 0, true);
    D.set(1, 2, true);
    auto L = stable_from_proposals(D);
    EXPECT_TRUE(L.has_edge(0, 1));
    EXPECT_FALSE(L.has_edge(1, 2));
    EXPECT_EQ(L.edge_count(), 1u);
    EXPECT_THROW(D.set(2, 2, true), DomainError);
}

TEST(Network, NodeStatistics) {
    StatisticSpec deg;
    deg.cap = 3;
    UndirectedNetwork path(3);
    path.add_edge(0, 1);
    path.add_edge(1, 2);
    std::vector<int> X(6, 0);
    EXPECT_DOUBLE_EQ(node_statistic(deg, path, X, 1), 2.0);
    EXPECT_DOUBLE_EQ(node_statistic(deg, UndirectedNetwork(3), X, 0), 0.0);
    UndirectedNetwork star(6);
    for (int k = 1; k < 6; ++k) star.add_edge(0, k);
    EXPECT_DOUBLE_EQ(node_statistic(deg, star, X, 0), 3.0);
}

TEST(Network, SubnetworkBits) {
    UndirectedNetwork tri(3);
    tri.add_edge(0, 1);
    tri.add_edge(0, 2);
    tri.add_edge(1, 2);
    EXPECT_EQ(pattern_bits(subnetwork(tri, {0, 1, 2}), 3), (std::vector<int>{1, 1, 1}));
    UndirectedNetwork path(3);
    path.add_edge(0, 1);
    path.add_edge(1, 2);
    // pair order (12), (13), (23) for the tuple (i1, i2, i3) = (0, 1, 2)
    EXPECT_EQ(pattern_bits(subnetwork(path, {0, 1, 2}), 3), (std::vector<int>{1, 0, 1}));
    UndirectedNetwork e(2);
    e.add_edge(0, 1);
    EXPECT_EQ(subnetwork(e, {0, 1}), 1u);
    EXPECT_THROW(subnetwork(path, {0, 0, 1}), DomainError);
}

TEST(Stability, TwoNodeBlockingPair) {
    auto m = PayoffModel::constant(0.0, 4);
    auto s = fixed_shocks(2, 0.0, 1.0);
    UndirectedNetwork L(2);
    L.add_edge(0, 1);
    std::vector<int> X{0, 0};
    EXPECT_TRUE(is_pairwise_stable(L, m, s, X));
    EXPECT_FALSE(is_pairwise_stable(UndirectedNetwork(2), m, s, X));
}

TEST(Stability, StrictInequalityTies) {
    auto m = PayoffModel::constant(0.0, 4);
    auto s = fixed_shocks(2, 0.5, 0.5);  // U + eps == MC exactly
    std::vector<int> X{0, 0};
    EXPECT_TRUE(is_pairwise_stable(UndirectedNetwork(2), m, s, X));
}

TEST(Enumeration, DegreeComplementarityHasTwoEquilibria) {
    // U = s' - 1: empty graph (U = 0 < 0.5) and triangle (U = 1 > 0.5) are both stable.
    auto m = PayoffModel::example_degree_complement(4);
    auto s = fixed_shocks(3, 0.5, 0.0);
    auto psn = enumerate_psn(m, s, {0, 0, 0});
    ASSERT_EQ(psn.size(), 2u);
    EXPECT_EQ(psn[0].edge_count(), 0u);
    EXPECT_EQ(psn[1].edge_count(), 3u);
}

TEST(Enumeration, DominantLinkGivesUniqueNetwork) {
    auto m = PayoffModel::constant(1.0, 4);
    auto s = fixed_shocks(2, -5.0, 0.0);
    auto psn = enumerate_psn(m, s, {0, 0});
    ASSERT_EQ(psn.size(), 1u);
    EXPECT_EQ(psn[0].edge_count(), 1u);
}

TEST(Enumeration, AgreesWithIndependentCheck) {
    auto m = PayoffModel::example_degree_complement(4);
    for (int n : {3, 4}) {
        for (std::uint64_t d = 0; d < 50; ++d) {
            auto s = draw_shocks(m, n, derive_seed("test_enum", 1, {d}));
            std::vector<int> X(n, 0);
            auto psn = enumerate_psn(m, s, X);
            int pairs = n * (n - 1) / 2, found = 0;
            for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
                std::vector<std::vector<int>> A(n, std::vector<int>(n, 0));
                int b = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = i + 1; j < n; ++j, ++b)
                        if ((mask >> b) & 1ULL) A[i][j] = A[j][i] = 1;
                bool stable = brute_stable(A, m, s);
                auto L = network_from_mask(n, mask);
                bool listed = std::find(psn.begin(), psn.end(), L) != psn.end();
                EXPECT_EQ(stable, listed);
                found += stable;
            }
            EXPECT_EQ(found, static_cast<int>(psn.size()));
        }
    }
}

TEST(Enumeration, RefusesLargeN) {
    auto m = PayoffModel::constant(0.0);
    auto s = draw_shocks(m, 7, 1);
    EXPECT_THROW(enumerate_psn(m, s, std::vector<int>(7, 0)), DomainError);
    EXPECT_THROW(enumerate_psn(m, s, std::vector<int>(7, 0), EnumerationOptions{8}), DomainError);
}

TEST(Tatonnement, UniversalRejectionGivesEmptyGraph) {
    auto m = PayoffModel::constant(0.0, 4);
    auto s = fixed_shocks(5, 10.0, 0.0);
    Rng rng(1);
    auto res = tatonnement(m, s, std::vector<int>(5, 0), rng);
    ASSERT_TRUE(std::holds_alternative<UndirectedNetwork>(res));
    EXPECT_EQ(std::get<UndirectedNetwork>(res).edge_count(), 0u);
}

TEST(Tatonnement, OutputIsStable) {
    auto m = PayoffModel::example_degree_complement(4);
    for (std::uint64_t d = 0; d < 30; ++d) {
        auto s = draw_shocks(m, 5, derive_seed("test_tat", 2, {d}));
        std::vector<int> X(5, 0);
        Rng rng(d);
        auto res = tatonnement(m, s, X, rng);
        if (auto* L = std::get_if<UndirectedNetwork>(&res)) {
            auto psn = enumerate_psn(m, s, X);
            EXPECT_NE(std::find(psn.begin(), psn.end(), *L), psn.end());
        }
    }
}

TEST(Tatonnement, SparseOutputIsStable) {
    StatisticSpec st;
    st.cap = 4;
    LinearIndex li;
    li.c0 = 0.2;
    li.s2 = -0.2;
    auto m = PayoffModel::linear(TypeSpace{}, st, li);
    for (std::uint64_t d = 0; d < 5; ++d) {
        auto s = draw_sparse_shocks(m, 300, derive_seed("test_sparse", 3, {d}));
        std::vector<int> X(300, 0);
        Rng rng(d);
        auto res = tatonnement(m, s, X, rng);
        ASSERT_TRUE(std::holds_alternative<UndirectedNetwork>(res));
        const auto& L = std::get<UndirectedNetwork>(res);
        EXPECT_TRUE(is_pairwise_stable(L, m, s, X));
        EXPECT_EQ(stable_from_proposals(proposals_at(L, m, s, X)), L);
    }
}

TEST(Tatonnement, SparsePreNetworkRate) {
    // Each directed pair is a pre-link with probability S((MC - U_bar)/sigma).
    auto m = PayoffModel::constant(0.3, 4);
    const int n = 2000;
    auto s = draw_sparse_shocks(m, n, 99);
    double expected = 0.0, observed = 0.0;
    for (int i = 0; i < n; ++i) {
        expected += (n - 1) * m.shock.survival((s.mc[i] - m.u_bar()) / s.sigma);
        observed += s.pre[i].size();
        for (auto [j, e] : s.pre[i]) EXPECT_GE(m.u_bar() + s.sigma * e, s.mc[i]);
    }
    EXPECT_NEAR(observed, expected, 4.0 * std::sqrt(expected));
}

TEST(PotentialValues, RejectingSourceLeavesPairDecision) {
    auto m = PayoffModel::example_degree_complement(4);
    PotentialValueQuery q;
    q.e1 = {{0, 1}, {0, 2}};
    q.d_e1 = {0, 0};
    q.target = 1;
    std::vector<int> X{0, 0, 0};
    // U_12 = U_21 = 0 at L + {12}; the pair links iff both shocks clear MC = 0.5.
    auto s = fixed_shocks(3, 0.5, -2.0);
    s.eps(1, 2) = 1.0;
    s.eps(2, 1) = 1.0;
    EXPECT_EQ(potential_values(q, m, s, X), (std::set<double>{1.0}));
    s.eps(2, 1) = 0.0;
    EXPECT_EQ(potential_values(q, m, s, X), (std::set<double>{0.0}));
}

TEST(PotentialValues, MechanicalOverwrite) {
    auto m = PayoffModel::constant(0.0, 4);
    auto s = fixed_shocks(3, 10.0, 0.0);  // everyone rejects
    std::vector<int> X{0, 0, 0};
    PotentialValueQuery q;
    q.target = 1;
    EXPECT_EQ(potential_values(q, m, s, X), (std::set<double>{0.0}));
    q.e2 = {{0, 1}, {1, 0}};
    q.d_e2 = {1, 1};
    EXPECT_EQ(potential_values(q, m, s, X), (std::set<double>{1.0}));
}

TEST(RelevantOverlap, DegreeAndTransitive) {
    StatisticSpec deg;
    EXPECT_EQ(relevant_overlap(deg, {{0, 1}}, {0}, {1}), 0);
    EXPECT_EQ(relevant_overlap(deg, {{0, 1}}, {1}, {1}), 1);
    StatisticSpec tr;
    tr.kind = StatKind::transitive_indicator;
    tr.radius = 2;
    EXPECT_EQ(relevant_overlap(tr, {{0, 1}, {0, 2}}, {1, 1}, {1, 2}), 1);
    EXPECT_EQ(relevant_overlap(tr, {{0, 1}, {0, 2}}, {1, 0}, {1, 2}), 0);
}
