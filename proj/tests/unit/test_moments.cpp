#include <gtest/gtest.h>

#include <algorithm>

#include "psnlab/moments.hpp"
#include "psnlab/rng.hpp"

using namespace psnlab;

namespace {

UndirectedNetwork random_graph(int n, double p, std::uint64_t seed) {
    Rng rng(seed);
    UndirectedNetwork L(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (uniform01(rng) < p) L.add_edge(i, j);
    return L;
}

std::vector<int> random_types(int n, int K, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> X(n);
    for (auto& x : X) x = static_cast<int>(uniform_index(rng, K));
    return X;
}

// Direct average over ordered D-tuples of 1{pattern in A} h(x).
double brute_moment(const UndirectedNetwork& L, const std::vector<int>& X, const MomentSpec& spec) {
    const int n = L.n(), D = spec.event.d;
    std::vector<int> idx(D);
    double sum = 0.0, count = 0.0;
    std::function<void(int)> rec = [&](int pos) {
        if (pos == D) {
            std::vector<int> xs(D);
            for (int k = 0; k < D; ++k) xs[k] = X[idx[k]];
            if (spec.event.contains(subnetwork(L, idx))) sum += spec.instrument(xs)[0];
            count += 1.0;
            return;
        }
        for (int v = 0; v < n; ++v) {
            if (std::find(idx.begin(), idx.begin() + pos, v) != idx.begin() + pos) continue;
            idx[pos] = v;
            rec(pos + 1);
        }
    };
    rec(0);
    return sum / count / spec.p_n(n);
}

}  // namespace

TEST(Event, Validation) {
    EXPECT_NO_THROW(SubnetworkEvent::single_link().validate());
    EXPECT_THROW((SubnetworkEvent{2, {}, false}.validate()), DomainError);
    EXPECT_THROW((SubnetworkEvent{2, {2u}, false}.validate()), DomainError);
    EXPECT_THROW((SubnetworkEvent{3, {0b100u}, true}.validate()), DomainError);
    EXPECT_EQ(SubnetworkEvent::two_link().min_links(), 2);
    EXPECT_EQ(SubnetworkEvent::full_support(3).configurations.size(), 8u);
}

TEST(Moment, FullSupportIsOne) {
    auto L = random_graph(30, 0.1, 1);
    std::vector<int> X(30, 0);
    MomentSpec sp;
    sp.event = SubnetworkEvent::full_support(3);
    sp.p_fixed = 1.0;
    EXPECT_NEAR(compute_moment(L, X, sp)[0], 1.0, 1e-12);
}

TEST(Moment, SingleLinkIsScaledDensity) {
    auto L = random_graph(40, 0.1, 2);
    std::vector<int> X(40, 0);
    MomentSpec sp;  // p_n = 1/n
    double expect = L.edge_count() / binom(40, 2) * 40.0;
    EXPECT_NEAR(compute_moment(L, X, sp)[0], expect, 1e-12);
}

TEST(Moment, TriangleCount) {
    UndirectedNetwork L(4);
    L.add_edge(0, 1);
    L.add_edge(1, 2);
    L.add_edge(0, 2);
    L.add_edge(2, 3);
    MomentSpec sp;
    sp.event = SubnetworkEvent::triangle();
    sp.p_fixed = 1.0;
    EXPECT_NEAR(compute_moment(L, {0, 0, 0, 0}, sp)[0], 1.0 / 4.0, 1e-15);
}

TEST(Moment, MatchesBruteForceWithTypes) {
    for (int D : {2, 3, 4}) {
        int n = D == 4 ? 9 : 14;
        auto L = random_graph(n, 0.3, 10 + D);
        auto X = random_types(n, 3, 20 + D);
        MomentSpec sp;
        sp.p_fixed = 0.25;
        if (D == 2) sp.event = SubnetworkEvent::single_link();
        if (D == 3) sp.event = SubnetworkEvent::two_link();
        if (D == 4) sp.event = SubnetworkEvent{4, {0b000111u, 0b111000u, 0b010101u}, false};
        sp.instrument.h = [](const std::vector<int>& xs) {
            double v = 0.0;
            for (std::size_t k = 0; k < xs.size(); ++k) v += (k + 1.0) * xs[k];
            return std::vector<double>{1.0 + v};
        };
        EXPECT_NEAR(compute_moment(L, X, sp, 3)[0], brute_moment(L, X, sp), 1e-10) << "D=" << D;
    }
}

TEST(Moment, InvariantUnderRelabeling) {
    auto L = random_graph(12, 0.3, 5);
    auto X = random_types(12, 2, 6);
    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[i] = (i * 5 + 3) % 12;
    auto L2 = permute(L, perm);
    std::vector<int> X2(12);
    for (int i = 0; i < 12; ++i) X2[perm[i]] = X[i];
    MomentSpec sp;
    sp.event = SubnetworkEvent::two_link();
    sp.instrument.h = [](const std::vector<int>& xs) { return std::vector<double>{1.0 + xs[0]}; };
    EXPECT_NEAR(compute_moment(L, X, sp, 2)[0], compute_moment(L2, X2, sp, 2)[0], 1e-12);
}

TEST(Moment, Normalization) {
    MomentSpec sp;
    sp.kappa = 2.0;
    sp.rho = 1.0;
    EXPECT_DOUBLE_EQ(sp.p_n(100), 0.02);
    sp.p_fixed = 0.5;
    EXPECT_DOUBLE_EQ(sp.p_n(100), 0.5);
    sp.p_fixed = 0.0;
    sp.kappa = 0.0;
    EXPECT_THROW(sp.p_n(10), DomainError);
}

TEST(Moment, EstimatedNormalization) {
    std::vector<Replication> reps;
    reps.push_back({UndirectedNetwork(5), std::vector<int>(5, 0)});
    EXPECT_THROW(estimate_p_n(reps, SubnetworkEvent::single_link()), DegenerateNormalization);
    reps[0].L.add_edge(0, 1);
    EXPECT_NEAR(estimate_p_n(reps, SubnetworkEvent::single_link()), 0.1, 1e-15);
}

TEST(Moment, ConditionalEventProbability) {
    UndirectedNetwork L(4);
    L.add_edge(0, 1);
    L.add_edge(2, 3);
    std::vector<Replication> reps{{L, {0, 1, 0, 0}}};
    // type-{0,1} pairs: (0,1), (1,2), (1,3); one linked
    EXPECT_NEAR(conditional_event_prob(reps, SubnetworkEvent::single_link(), {1, 0}), 1.0 / 3.0, 1e-15);
    EXPECT_THROW(conditional_event_prob(reps, SubnetworkEvent::single_link(), {2, 2}), MissingCell);
}
