#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "psnlab/model.hpp"

namespace psnlab {

using EdgeSet = std::vector<std::pair<int, int>>;  // directed pairs (i, j)

// Undirected simple graph stored as sorted neighbor lists.
class UndirectedNetwork {
public:
    UndirectedNetwork() = default;
    explicit UndirectedNetwork(int n) : adj_(static_cast<std::size_t>(n)) {}

    int n() const { return static_cast<int>(adj_.size()); }
    int degree(int i) const { return static_cast<int>(adj_[i].size()); }
    const std::vector<int>& neighbors(int i) const { return adj_[i]; }

    bool has_edge(int i, int j) const {
        const auto& a = adj_[i];
        return std::binary_search(a.begin(), a.end(), j);
    }

    // Returns true when the edge was inserted.
    bool add_edge(int i, int j) {
        if (i == j) throw DomainError("self-links are not allowed");
        if (!insert_sorted(adj_[i], j)) return false;
        insert_sorted(adj_[j], i);
        ++edges_;
        return true;
    }

    bool remove_edge(int i, int j) {
        if (!erase_sorted(adj_[i], j)) return false;
        erase_sorted(adj_[j], i);
        --edges_;
        return true;
    }

    void set_edge(int i, int j, bool on) {
        if (on) add_edge(i, j);
        else remove_edge(i, j);
    }

    std::size_t edge_count() const { return edges_; }

    // Edges (i < j) in lexicographic order.
    std::vector<std::pair<int, int>> edges() const {
        std::vector<std::pair<int, int>> e;
        e.reserve(edges_);
        for (int i = 0; i < n(); ++i)
            for (int j : adj_[i])
                if (i < j) e.emplace_back(i, j);
        return e;
    }

    int common_neighbors(int i, int j) const {
        const auto& a = adj_[i];
        const auto& b = adj_[j];
        int c = 0;
        std::size_t p = 0, q = 0;
        while (p < a.size() && q < b.size()) {
            if (a[p] < b[q]) ++p;
            else if (a[p] > b[q]) ++q;
            else {
                if (a[p] != i && a[p] != j) ++c;
                ++p;
                ++q;
            }
        }
        return c;
    }

    bool operator==(const UndirectedNetwork& o) const { return adj_ == o.adj_; }
    bool operator<(const UndirectedNetwork& o) const { return edges() < o.edges(); }

private:
    static bool insert_sorted(std::vector<int>& v, int x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it != v.end() && *it == x) return false;
        v.insert(it, x);
        return true;
    }
    static bool erase_sorted(std::vector<int>& v, int x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it == v.end() || *it != x) return false;
        v.erase(it);
        return true;
    }

    std::vector<std::vector<int>> adj_;
    std::size_t edges_ = 0;
};

// Directed acceptance indicators D_ij.
class ProposalNetwork {
public:
    ProposalNetwork() = default;
    explicit ProposalNetwork(int n) : out_(static_cast<std::size_t>(n)) {}

    int n() const { return static_cast<int>(out_.size()); }

    void set(int i, int j, bool on) {
        if (i == j) {
            if (on) throw DomainError("D_ii must be 0");
            return;
        }
        auto& v = out_[i];
        auto it = std::lower_bound(v.begin(), v.end(), j);
        bool present = it != v.end() && *it == j;
        if (on && !present) v.insert(it, j);
        if (!on && present) v.erase(it);
    }
    bool get(int i, int j) const {
        const auto& v = out_[i];
        return std::binary_search(v.begin(), v.end(), j);
    }
    const std::vector<int>& out(int i) const { return out_[i]; }

private:
    std::vector<std::vector<int>> out_;
};

// L = D ⊙ Dᵀ
inline UndirectedNetwork stable_from_proposals(const ProposalNetwork& d) {
    UndirectedNetwork L(d.n());
    for (int i = 0; i < d.n(); ++i)
        for (int j : d.out(i))
            if (i < j && d.get(j, i)) L.add_edge(i, j);
    return L;
}

// Node statistic of i; `extra` >= 0 counts one hypothetical additional neighbor.
inline double node_statistic_with(const StatisticSpec& spec, const UndirectedNetwork& L,
                                  const std::vector<int>& X, int i, int extra) {
    int deg = L.degree(i) + (extra >= 0 ? 1 : 0);
    switch (spec.kind) {
        case StatKind::degree: return spec.clamp_count(deg);
        case StatKind::composition_share: {
            int flagged = 0;
            for (int k : L.neighbors(i))
                if (X[k] == spec.flag_type) ++flagged;
            if (extra >= 0 && X[extra] == spec.flag_type) ++flagged;
            return spec.share(flagged, deg);
        }
        default: throw DomainError("node_statistic: edge statistic kind");
    }
}

inline double node_statistic(const StatisticSpec& spec, const UndirectedNetwork& L,
                             const std::vector<int>& X, int i) {
    if (i < 0 || i >= L.n()) throw DomainError("node_statistic: node out of range");
    return node_statistic_with(spec, L, X, i, -1);
}

inline double edge_statistic(const StatisticSpec& spec, const UndirectedNetwork& L,
                             const std::vector<int>& /*X*/, int i, int j) {
    if (i == j) throw DomainError("edge_statistic: i == j");
    if (!is_edge_kind(spec.kind)) throw DomainError("edge_statistic: node statistic kind");
    return spec.clamp_count(L.common_neighbors(i, j));
}

// Index of pair (a, b), a < b < D, in the order (0,1), (0,2), ..., (D-2, D-1).
inline int pair_index(int a, int b, int D) {
    if (a > b) std::swap(a, b);
    return a * D - a * (a + 1) / 2 + (b - a - 1);
}

inline int pair_count(int D) { return D * (D - 1) / 2; }

// Subnetwork among an ordered D-tuple as a bitmask; bit k is the k-th pair in
// lexicographic order.
inline std::uint32_t subnetwork(const UndirectedNetwork& L, const std::vector<int>& nodes) {
    int D = static_cast<int>(nodes.size());
    if (D > 8) throw DomainError("subnetwork: D > 8 unsupported");
    for (int a = 0; a < D; ++a)
        for (int b = a + 1; b < D; ++b)
            if (nodes[a] == nodes[b]) throw DomainError("subnetwork: duplicate nodes");
    std::uint32_t mask = 0;
    int k = 0;
    for (int a = 0; a < D; ++a)
        for (int b = a + 1; b < D; ++b, ++k)
            if (L.has_edge(nodes[a], nodes[b])) mask |= (1u << k);
    return mask;
}

inline std::vector<int> pattern_bits(std::uint32_t mask, int D) {
    std::vector<int> bits(static_cast<std::size_t>(pair_count(D)));
    for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = (mask >> k) & 1u;
    return bits;
}

inline std::uint32_t pattern_from_bits(const std::vector<int>& bits) {
    std::uint32_t m = 0;
    for (std::size_t k = 0; k < bits.size(); ++k)
        if (bits[k]) m |= (1u << k);
    return m;
}

// Relabel nodes: node i becomes perm[i].
inline UndirectedNetwork permute(const UndirectedNetwork& L, const std::vector<int>& perm) {
    UndirectedNetwork out(L.n());
    for (auto [i, j] : L.edges()) out.add_edge(perm[i], perm[j]);
    return out;
}

}  // namespace psnlab
