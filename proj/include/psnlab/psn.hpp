#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <unordered_set>
#include <variant>
#include <vector>

#include "psnlab/graph.hpp"
#include "psnlab/model.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

// Dense taste shocks eps_ij (row-major, diagonal unused) and marginal costs.
struct ShockRealization {
    int n = 0;
    double sigma = 1.0;
    std::vector<double> epsilon;
    std::vector<double> mc;
    std::uint64_t seed = 0;

    double eps(int i, int j) const { return epsilon[static_cast<std::size_t>(i) * n + j]; }
    double& eps(int i, int j) { return epsilon[static_cast<std::size_t>(i) * n + j]; }
};

inline ShockRealization draw_shocks(const PayoffModel& m, int n, std::uint64_t seed) {
    auto sc = scaling(n, m.shock);
    Rng rng(seed);
    ShockRealization s;
    s.n = n;
    s.sigma = sc.sigma_n;
    s.seed = seed;
    s.mc.resize(n);
    s.epsilon.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) s.mc[i] = draw_marginal_cost(sc, m.shock, rng);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) s.eps(i, j) = m.shock.sample(rng);
    return s;
}

// Systematic payoffs (U*_ij, U*_ji) evaluated at L + {ij}.
inline std::pair<double, double> systematic_pair(const PayoffModel& m, const UndirectedNetwork& L,
                                                 const std::vector<int>& X, int i, int j) {
    bool present = L.has_edge(i, j);
    double si = node_statistic_with(m.node_stat, L, X, i, present ? -1 : j);
    double sj = node_statistic_with(m.node_stat, L, X, j, present ? -1 : i);
    double t = m.edge_stat ? edge_statistic(*m.edge_stat, L, X, i, j) : m.t0;
    return {m.u(X[i], X[j], si, sj, t), m.u(X[j], X[i], sj, si, t)};
}

// Acceptance uses a strict inequality: exact ties resolve toward non-formation.
inline bool accepts(double u_star, double sigma, double eps, double mc) {
    return u_star + sigma * eps > mc;
}

// One candidate pair with both directional shocks.
struct PairShock {
    int i = 0, j = 0;
    double eps_ij = 0.0, eps_ji = 0.0;
};

inline std::vector<PairShock> all_pairs(const ShockRealization& s) {
    std::vector<PairShock> v;
    v.reserve(static_cast<std::size_t>(s.n) * (s.n - 1) / 2);
    for (int i = 0; i < s.n; ++i)
        for (int j = i + 1; j < s.n; ++j) v.push_back({i, j, s.eps(i, j), s.eps(j, i)});
    return v;
}

inline bool pair_wants_link(const PayoffModel& m, const UndirectedNetwork& L,
                            const std::vector<int>& X, double sigma, const std::vector<double>& mc,
                            const PairShock& p) {
    auto [uij, uji] = systematic_pair(m, L, X, p.i, p.j);
    return accepts(uij, sigma, p.eps_ij, mc[p.i]) && accepts(uji, sigma, p.eps_ji, mc[p.j]);
}

inline bool is_pairwise_stable(const UndirectedNetwork& L, const PayoffModel& m,
                               const ShockRealization& s, const std::vector<int>& X) {
    if (L.n() != s.n || static_cast<int>(X.size()) != s.n)
        throw DomainError("is_pairwise_stable: dimension mismatch");
    for (int i = 0; i < s.n; ++i)
        for (int j = i + 1; j < s.n; ++j) {
            PairShock p{i, j, s.eps(i, j), s.eps(j, i)};
            if (pair_wants_link(m, L, X, s.sigma, s.mc, p) != L.has_edge(i, j)) return false;
        }
    return true;
}

inline UndirectedNetwork network_from_mask(int n, std::uint64_t mask) {
    UndirectedNetwork L(n);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k)
            if ((mask >> k) & 1ULL) L.add_edge(i, j);
    return L;
}

struct EnumerationOptions {
    int n_max = 6;
};

inline std::vector<UndirectedNetwork> enumerate_psn(const PayoffModel& m,
                                                    const ShockRealization& s,
                                                    const std::vector<int>& X,
                                                    EnumerationOptions opt = {}) {
    if (opt.n_max > 7) throw DomainError("enumerate_psn: n_max above 7 is not supported");
    if (s.n > opt.n_max) throw DomainError("enumerate_psn: n exceeds n_max");
    int pairs = s.n * (s.n - 1) / 2;
    std::vector<UndirectedNetwork> out;
    for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
        auto L = network_from_mask(s.n, mask);
        if (is_pairwise_stable(L, m, s, X)) out.push_back(std::move(L));
    }
    return out;
}

struct CycleReport {
    int sweeps = 0;
    std::size_t trail_length = 0;  // distinct sweep-end states visited
    bool repeated_state = false;   // false when the sweep cap was hit
};

struct TatonnementOptions {
    int max_sweeps = 200;
    std::size_t history_window = 1024;
};

using TatonnementResult = std::variant<UndirectedNetwork, CycleReport>;

inline std::uint64_t edge_key(int i, int j) {
    if (i > j) std::swap(i, j);
    return splitmix64((static_cast<std::uint64_t>(i) << 32) ^ static_cast<std::uint64_t>(j) ^
                      0x5bd1e9955bd1e995ULL);
}

// Gauss-Seidel pair updates over the candidate pairs; pairs outside the list
// are never linked. The initial graph is uniform over the candidate pairs.
inline TatonnementResult tatonnement(const PayoffModel& m, const std::vector<int>& X, int n,
                                     double sigma, const std::vector<double>& mc,
                                     const std::vector<PairShock>& pairs, Rng& rng,
                                     TatonnementOptions opt = {}) {
    UndirectedNetwork L(n);
    std::uint64_t hash = 0;
    for (const auto& p : pairs)
        if (uniform01(rng) < 0.5) {
            L.add_edge(p.i, p.j);
            hash ^= edge_key(p.i, p.j);
        }
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::deque<std::uint64_t> trail;
    std::unordered_set<std::uint64_t> seen;
    trail.push_back(hash);
    seen.insert(hash);
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        shuffle(order.begin(), order.end(), rng);
        bool changed = false;
        for (std::size_t k : order) {
            const auto& p = pairs[k];
            bool want = pair_wants_link(m, L, X, sigma, mc, p);
            if (want != L.has_edge(p.i, p.j)) {
                L.set_edge(p.i, p.j, want);
                hash ^= edge_key(p.i, p.j);
                changed = true;
            }
        }
        if (!changed) return L;
        if (seen.count(hash)) return CycleReport{sweep, seen.size(), true};
        trail.push_back(hash);
        seen.insert(hash);
        if (trail.size() > opt.history_window) {
            seen.erase(trail.front());
            trail.pop_front();
        }
    }
    return CycleReport{opt.max_sweeps, seen.size(), false};
}

inline TatonnementResult tatonnement(const PayoffModel& m, const ShockRealization& s,
                                     const std::vector<int>& X, Rng& rng,
                                     TatonnementOptions opt = {}) {
    return tatonnement(m, X, s.n, s.sigma, s.mc, all_pairs(s), rng, opt);
}

// Shocks stored only where they can matter: for each node i the pre-network
// partners j with U_bar + sigma eps_ij >= MC_i, drawn by geometric skipping with
// eps_ij from G truncated to that region. Pairs outside the mutual pre-network
// can never link because U* <= U_bar.
struct SparseShockRealization {
    int n = 0;
    double sigma = 1.0;
    double u_bar = 0.0;
    std::vector<double> mc;
    std::vector<std::vector<std::pair<int, double>>> pre;  // sorted by partner
    std::vector<PairShock> candidates;                     // mutual pre-links, i < j

    // eps_ij if j is a pre-network partner of i.
    std::optional<double> pre_eps(int i, int j) const {
        const auto& v = pre[i];
        auto it = std::lower_bound(v.begin(), v.end(), std::make_pair(j, -1e300));
        if (it != v.end() && it->first == j) return it->second;
        return std::nullopt;
    }
};

inline SparseShockRealization draw_sparse_shocks(const PayoffModel& m, int n, std::uint64_t seed) {
    auto sc = scaling(n, m.shock);
    Rng rng(seed);
    SparseShockRealization s;
    s.n = n;
    s.sigma = sc.sigma_n;
    s.u_bar = m.u_bar();
    s.mc.resize(n);
    s.pre.resize(n);
    for (int i = 0; i < n; ++i) s.mc[i] = draw_marginal_cost(sc, m.shock, rng);
    for (int i = 0; i < n; ++i) {
        double tau = (s.mc[i] - s.u_bar) / s.sigma;
        double q = m.shock.survival(tau);
        auto& v = s.pre[i];
        if (q <= 0.0) continue;
        if (q >= 1.0) {
            for (int j = 0; j < n; ++j)
                if (j != i) v.emplace_back(j, m.shock.sample(rng));
            continue;
        }
        double log1mq = std::log1p(-q);
        long long pos = -1;
        while (true) {
            // number of failures before the next success
            double g = std::floor(std::log(uniform01(rng)) / log1mq);
            if (g > static_cast<double>(n)) break;
            pos += static_cast<long long>(g) + 1;
            if (pos >= n - 1) break;
            int j = static_cast<int>(pos < i ? pos : pos + 1);
            v.emplace_back(j, m.shock.sample_above(tau, rng));
        }
    }
    for (int i = 0; i < n; ++i)
        for (auto [j, e] : s.pre[i])
            if (j > i)
                if (auto back = s.pre_eps(j, i)) s.candidates.push_back({i, j, e, *back});
    return s;
}

inline TatonnementResult tatonnement(const PayoffModel& m, const SparseShockRealization& s,
                                     const std::vector<int>& X, Rng& rng,
                                     TatonnementOptions opt = {}) {
    return tatonnement(m, X, s.n, s.sigma, s.mc, s.candidates, rng, opt);
}

inline bool is_pairwise_stable(const UndirectedNetwork& L, const PayoffModel& m,
                               const SparseShockRealization& s, const std::vector<int>& X) {
    std::size_t linked = 0;
    for (const auto& p : s.candidates) {
        bool on = L.has_edge(p.i, p.j);
        linked += on;
        if (pair_wants_link(m, L, X, s.sigma, s.mc, p) != on) return false;
    }
    return linked == L.edge_count();
}

// Directed proposals D*_ij = 1{U_ij(L*) + sigma eps_ij > MC_i} at a stable network.
inline ProposalNetwork proposals_at(const UndirectedNetwork& L, const PayoffModel& m,
                                    const SparseShockRealization& s, const std::vector<int>& X) {
    ProposalNetwork D(s.n);
    for (int i = 0; i < s.n; ++i)
        for (auto [j, e] : s.pre[i]) {
            auto [uij, uji] = systematic_pair(m, L, X, i, j);
            (void)uji;
            if (accepts(uij, s.sigma, e, s.mc[i])) D.set(i, j, true);
        }
    return D;
}

inline ProposalNetwork proposals_at(const UndirectedNetwork& L, const PayoffModel& m,
                                    const ShockRealization& s, const std::vector<int>& X) {
    ProposalNetwork D(s.n);
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            if (i != j) {
                auto [uij, uji] = systematic_pair(m, L, X, i, j);
                (void)uji;
                if (accepts(uij, s.sigma, s.eps(i, j), s.mc[i])) D.set(i, j, true);
            }
    return D;
}

struct PotentialValueQuery {
    EdgeSet e1;
    std::vector<int> d_e1;
    EdgeSet e2;
    std::vector<int> d_e2;
    int target = -1;                              // node target (node statistic)
    std::optional<std::pair<int, int>> target_pair;  // pair target (edge statistic)
};

// Set of values of the target statistic over all proposal networks that pin E1
// and satisfy the one-sided stability conditions elsewhere, after mechanically
// overwriting E2.
inline std::set<double> potential_values(const PotentialValueQuery& q, const PayoffModel& m,
                                         const ShockRealization& s, const std::vector<int>& X,
                                         EnumerationOptions opt = {}) {
    if (s.n > opt.n_max) throw DomainError("potential_values: n exceeds n_max");
    if (q.e1.size() != q.d_e1.size() || q.e2.size() != q.d_e2.size())
        throw DomainError("potential_values: bit vectors must match edge sets");
    if (q.target < 0 && !q.target_pair) throw DomainError("potential_values: no target");
    const int n = s.n;
    std::vector<int> pin(static_cast<std::size_t>(n) * n, -1);
    for (std::size_t k = 0; k < q.e1.size(); ++k)
        pin[static_cast<std::size_t>(q.e1[k].first) * n + q.e1[k].second] = q.d_e1[k];
    int pairs = n * (n - 1) / 2;
    std::set<double> values;
    std::vector<char> D(static_cast<std::size_t>(n) * n);
    for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
        auto L = network_from_mask(n, mask);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                auto [uij, uji] = systematic_pair(m, L, X, i, j);
                int pij = pin[static_cast<std::size_t>(i) * n + j];
                int pji = pin[static_cast<std::size_t>(j) * n + i];
                D[i * n + j] = pij >= 0 ? pij : accepts(uij, s.sigma, s.eps(i, j), s.mc[i]);
                D[j * n + i] = pji >= 0 ? pji : accepts(uji, s.sigma, s.eps(j, i), s.mc[j]);
            }
        bool consistent = true;
        for (int i = 0; i < n && consistent; ++i)
            for (int j = i + 1; j < n; ++j)
                if ((D[i * n + j] && D[j * n + i]) != L.has_edge(i, j)) {
                    consistent = false;
                    break;
                }
        if (!consistent) continue;
        for (std::size_t k = 0; k < q.e2.size(); ++k)
            D[q.e2[k].first * n + q.e2[k].second] = static_cast<char>(q.d_e2[k]);
        UndirectedNetwork L2(n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (D[i * n + j] && D[j * n + i]) L2.add_edge(i, j);
        if (q.target_pair) {
            if (!m.edge_stat) throw DomainError("potential_values: model has no edge statistic");
            values.insert(edge_statistic(*m.edge_stat, L2, X, q.target_pair->first,
                                         q.target_pair->second));
        } else {
            values.insert(node_statistic(m.node_stat, L2, X, q.target));
        }
    }
    return values;
}

// Relevant overlap between pinned edges (with bits) and the target node(s).
// Degree-type statistics: the bit L~_ij for a node target j.
// Transitive statistics: 1{some source i has L~_ij = L~_ik = 1} for a pair
// target (j,k), or 1{two sources i, j have L~_ik = L~_jk = 1} for a node target k.
inline int relevant_overlap(const StatisticSpec& spec, const EdgeSet& e,
                            const std::vector<int>& bits, const std::vector<int>& targets) {
    if (e.size() != bits.size()) throw DomainError("relevant_overlap: bits must match edges");
    auto linked = [&](int a, int b) {
        for (std::size_t k = 0; k < e.size(); ++k)
            if (bits[k] && ((e[k].first == a && e[k].second == b) ||
                            (e[k].first == b && e[k].second == a)))
                return true;
        return false;
    };
    std::set<int> sources;
    for (auto [a, b] : e) sources.insert(a);
    switch (spec.kind) {
        case StatKind::degree:
        case StatKind::composition_share: {
            if (targets.size() != 1) throw DomainError("relevant_overlap: one target expected");
            int cnt = 0;
            for (int i : sources)
                if (i != targets[0] && linked(i, targets[0])) ++cnt;
            return cnt;
        }
        case StatKind::transitive_count:
        case StatKind::transitive_indicator: {
            if (targets.size() == 2) {
                for (int i : sources)
                    if (i != targets[0] && i != targets[1] && linked(i, targets[0]) &&
                        linked(i, targets[1]))
                        return 1;
                return 0;
            }
            if (targets.size() == 1) {
                int k = targets[0], cnt = 0;
                for (int i : sources)
                    if (i != k && linked(i, k)) ++cnt;
                return cnt >= 2 ? 1 : 0;
            }
            throw DomainError("relevant_overlap: one or two targets expected");
        }
    }
    throw DomainError("relevant_overlap: unsupported statistic kind");
}

}  // namespace psnlab
