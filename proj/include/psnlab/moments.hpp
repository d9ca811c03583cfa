#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "psnlab/graph.hpp"

namespace psnlab {

struct DegenerateNormalization : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingCell : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SubnetworkEvent {
    int d = 2;
    std::set<std::uint32_t> configurations;  // bit layout of graph::subnetwork
    bool requires_link_to_first = false;

    void validate() const {
        if (d < 2 || d > 8) throw DomainError("event: D must be in [2, 8]");
        if (configurations.empty()) throw DomainError("event: no configurations");
        std::uint32_t limit = 1u << pair_count(d);
        for (auto c : configurations)
            if (c >= limit) throw DomainError("event: configuration outside the bit layout");
        if (requires_link_to_first)
            for (auto c : configurations) {
                bool ok = false;
                for (int s = 1; s < d; ++s) ok = ok || ((c >> pair_index(0, s, d)) & 1u);
                if (!ok) throw DomainError("event: configuration without a link to the first node");
            }
    }

    bool contains(std::uint32_t pat) const { return configurations.count(pat) > 0; }

    // Smallest number of links among the configurations.
    int min_links() const {
        int best = pair_count(d);
        for (auto c : configurations) best = std::min(best, std::popcount(c));
        return best;
    }

    static SubnetworkEvent single_link() { return {2, {1u}, true}; }
    static SubnetworkEvent full_support(int d) {
        SubnetworkEvent e{d, {}, false};
        for (std::uint32_t c = 0; c < (1u << pair_count(d)); ++c) e.configurations.insert(c);
        return e;
    }
    // Exactly two links among three nodes (any center).
    static SubnetworkEvent two_link() { return {3, {0b011u, 0b101u, 0b110u}, false}; }
    static SubnetworkEvent triangle() { return {3, {0b111u}, true}; }
};

struct Instrument {
    int q = 1;
    std::function<std::vector<double>(const std::vector<int>& xs)> h;
    double bound = 1.0;

    std::vector<double> operator()(const std::vector<int>& xs) const {
        if (!h) return std::vector<double>(static_cast<std::size_t>(q), 1.0);
        return h(xs);
    }
    static Instrument constant_one() { return {}; }
};

// Normalization p_n = kappa * n^{-rho}, or a fixed supplied value.
struct MomentSpec {
    SubnetworkEvent event = SubnetworkEvent::single_link();
    Instrument instrument;
    double kappa = 1.0;
    double rho = 1.0;
    double p_fixed = 0.0;  // > 0 overrides the rate form

    double p_n(int n) const {
        double p = p_fixed > 0.0 ? p_fixed : kappa * std::pow(static_cast<double>(n), -rho);
        if (!(p > 0.0)) throw DomainError("moment spec: p_n must be positive");
        return p;
    }
};

inline double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Pattern seen by the reordered tuple (perm[0], ..., perm[D-1]).
inline std::uint32_t permute_pattern(std::uint32_t pat, const std::vector<int>& perm) {
    int D = static_cast<int>(perm.size());
    std::uint32_t out = 0;
    for (int a = 0; a < D; ++a)
        for (int b = a + 1; b < D; ++b)
            if ((pat >> pair_index(perm[a], perm[b], D)) & 1u) out |= 1u << pair_index(a, b, D);
    return out;
}

// (1/D!) sum over orderings of 1{pattern in A} h(x ordering).
inline std::vector<double> symmetrized_contribution(const SubnetworkEvent& ev, const Instrument& ins,
                                                    const std::vector<int>& xs,
                                                    std::uint32_t pat) {
    int D = ev.d;
    std::vector<int> perm(static_cast<std::size_t>(D));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> acc(static_cast<std::size_t>(ins.q), 0.0);
    std::vector<int> xp(static_cast<std::size_t>(D));
    int count = 0;
    do {
        ++count;
        if (!ev.contains(permute_pattern(pat, perm))) continue;
        for (int a = 0; a < D; ++a) xp[a] = xs[perm[a]];
        auto v = ins(xp);
        for (int k = 0; k < ins.q; ++k) acc[k] += v[k];
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (auto& v : acc) v /= count;
    return acc;
}

// Sum over unordered D-tuples of f(xs, pattern), where f(xs, 0) must depend only
// on the multiset of types. Tuples with links are visited explicitly (D <= 3) and
// link-free tuples are counted through type multiplicities.
template <class F>
std::vector<double> tuple_sum(const UndirectedNetwork& L, const std::vector<int>& X, int D,
                              int num_types, int q, F&& f) {
    const int n = L.n();
    if (D > n) throw DomainError("moment: D exceeds n");
    std::vector<double> acc(static_cast<std::size_t>(q), 0.0);
    auto add = [&](const std::vector<double>& v, double w) {
        for (int k = 0; k < q; ++k) acc[k] += w * v[k];
    };
    if (D > 3) {
        std::vector<int> idx(static_cast<std::size_t>(D));
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<int> xs(static_cast<std::size_t>(D));
        while (true) {
            for (int a = 0; a < D; ++a) xs[a] = X[idx[a]];
            add(f(xs, subnetwork(L, idx)), 1.0);
            int a = D - 1;
            while (a >= 0 && idx[a] == n - D + a) --a;
            if (a < 0) break;
            ++idx[a];
            for (int b = a + 1; b < D; ++b) idx[b] = idx[b - 1] + 1;
        }
        return acc;
    }
    // link-free contribution over all tuples via type multisets
    std::vector<int> cnt(static_cast<std::size_t>(num_types), 0);
    for (int x : X) ++cnt[x];
    std::vector<int> ms(static_cast<std::size_t>(D), 0);
    std::function<void(int, int)> rec = [&](int pos, int from) {
        if (pos == D) {
            double mult = 1.0;
            for (int t = 0; t < num_types; ++t) {
                int k = static_cast<int>(std::count(ms.begin(), ms.end(), t));
                mult *= binom(cnt[t], k);
            }
            if (mult > 0) add(f(ms, 0u), mult);
            return;
        }
        for (int t = from; t < num_types; ++t) {
            ms[pos] = t;
            rec(pos + 1, t);
        }
    };
    rec(0, 0);
    // linked tuples: replace their link-free value by the actual one. Terms depend
    // only on (types, pattern), so they are cached.
    std::map<std::pair<std::vector<int>, std::uint32_t>, std::vector<double>> cache;
    auto term = [&](const std::vector<int>& xs, std::uint32_t pat) -> const std::vector<double>& {
        auto key = std::make_pair(xs, pat);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(std::move(key), f(xs, pat)).first;
        return it->second;
    };
    auto add_linked = [&](const std::vector<int>& xs, std::uint32_t pat) {
        add(term(xs, pat), 1.0);
        std::vector<int> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        add(term(sorted, 0u), -1.0);
    };
    if (D == 2) {
        for (auto [i, j] : L.edges()) add_linked({X[i], X[j]}, 1u);
    } else {
        std::vector<int> nodes(3), xs(3), near(static_cast<std::size_t>(num_types));
        for (auto [i, j] : L.edges()) {
            // k adjacent to i or j: visit explicitly, counting each triad once at its
            // lexicographically smallest present edge
            std::vector<int> ks;
            for (int k : L.neighbors(i))
                if (k != j) ks.push_back(k);
            for (int k : L.neighbors(j))
                if (k != i) ks.push_back(k);
            std::sort(ks.begin(), ks.end());
            ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
            std::fill(near.begin(), near.end(), 0);
            for (int k : ks) {
                ++near[X[k]];
                std::array<int, 3> t{i, j, k};
                std::sort(t.begin(), t.end());
                std::pair<int, int> first{n, n};
                for (int a = 0; a < 3; ++a)
                    for (int b = a + 1; b < 3; ++b)
                        if (L.has_edge(t[a], t[b])) first = std::min(first, std::make_pair(t[a], t[b]));
                if (first != std::make_pair(std::min(i, j), std::max(i, j))) continue;
                for (int a = 0; a < 3; ++a) {
                    nodes[a] = t[a];
                    xs[a] = X[t[a]];
                }
                add_linked(xs, subnetwork(L, nodes));
            }
            // remaining k: the triad holds the single link (i, j); grouped by type of k
            for (int t = 0; t < num_types; ++t) {
                double c = cnt[t] - near[t] - (X[i] == t) - (X[j] == t);
                if (c <= 0) continue;
                std::vector<int> ys{X[i], X[j], t};
                add(term(ys, 1u), c);
                std::sort(ys.begin(), ys.end());
                add(term(ys, 0u), -c);
            }
        }
    }
    return acc;
}

inline int type_count(const std::vector<int>& X) {
    return X.empty() ? 1 : *std::max_element(X.begin(), X.end()) + 1;
}

// m_hat = [C(n,D) p_n]^{-1} sum over unordered tuples of the symmetrized term.
inline std::vector<double> compute_moment(const UndirectedNetwork& L, const std::vector<int>& X,
                                          const MomentSpec& spec, int num_types = 0) {
    spec.event.validate();
    int n = L.n();
    if (spec.event.d > n) throw DomainError("compute_moment: D exceeds n");
    int K = std::max(num_types, type_count(X));
    auto f = [&](const std::vector<int>& xs, std::uint32_t pat) {
        return symmetrized_contribution(spec.event, spec.instrument, xs, pat);
    };
    auto s = tuple_sum(L, X, spec.event.d, K, spec.instrument.q, f);
    double norm = binom(n, spec.event.d) * spec.p_n(n);
    for (auto& v : s) v /= norm;
    return s;
}

struct Replication {
    UndirectedNetwork L;
    std::vector<int> X;
};

// Pooled frequency of the (symmetrized) event over all tuples and replications.
inline double estimate_p_n(const std::vector<Replication>& reps, const SubnetworkEvent& ev) {
    if (reps.empty()) throw DomainError("estimate_p_n: no replications");
    MomentSpec spec;
    spec.event = ev;
    spec.p_fixed = 1.0;
    double hits = 0.0, tuples = 0.0;
    for (const auto& r : reps) {
        double c = binom(r.L.n(), ev.d);
        hits += compute_moment(r.L, r.X, spec)[0] * c;
        tuples += c;
    }
    double p = hits / tuples;
    if (!(p > 0.0)) throw DegenerateNormalization("estimate_p_n: event never observed");
    return p;
}

// Frequency of the event among tuples whose type multiset equals `cell`.
inline double conditional_event_prob(const std::vector<Replication>& reps,
                                     const SubnetworkEvent& ev, std::vector<int> cell) {
    ev.validate();
    if (static_cast<int>(cell.size()) != ev.d) throw DomainError("conditional_event_prob: cell size");
    std::sort(cell.begin(), cell.end());
    Instrument ins;
    ins.q = 2;
    ins.h = [cell](const std::vector<int>& xs) {
        auto s = xs;
        std::sort(s.begin(), s.end());
        return std::vector<double>{s == cell ? 1.0 : 0.0, 0.0};
    };
    SubnetworkEvent all = SubnetworkEvent::full_support(ev.d);
    double hits = 0.0, total = 0.0;
    for (const auto& r : reps) {
        int K = std::max(type_count(r.X), cell.back() + 1);
        auto fe = [&](const std::vector<int>& xs, std::uint32_t pat) {
            return symmetrized_contribution(ev, ins, xs, pat);
        };
        auto fa = [&](const std::vector<int>& xs, std::uint32_t pat) {
            return symmetrized_contribution(all, ins, xs, pat);
        };
        hits += tuple_sum(r.L, r.X, ev.d, K, 2, fe)[0];
        total += tuple_sum(r.L, r.X, ev.d, K, 2, fa)[0];
    }
    if (total <= 0.0) throw MissingCell("conditional_event_prob: attribute cell not observed");
    return hits / total;
}

}  // namespace psnlab
