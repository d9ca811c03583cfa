#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "psnlab/graph.hpp"
#include "psnlab/model.hpp"
#include "psnlab/moments.hpp"
#include "psnlab/psn.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

inline double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Aggregate states are defined for the degree statistic without edge statistics.
inline void require_degree_model(const PayoffModel& m) {
    if (m.node_stat.kind != StatKind::degree || m.edge_stat)
        throw DomainError("aggregate state: only the degree statistic is supported");
}

// Table over (x, s) cells, s indexing the statistic support.
struct InclusiveValueFn {
    int k = 0, s = 0;
    std::vector<double> table;

    InclusiveValueFn() = default;
    InclusiveValueFn(int types, int support, double v = 0.0)
        : k(types), s(support), table(static_cast<std::size_t>(types) * support, v) {}

    double& at(int x, int si) { return table[static_cast<std::size_t>(x) * s + si]; }
    double at(int x, int si) const { return table[static_cast<std::size_t>(x) * s + si]; }

    void validate() const {
        for (double v : table)
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("inclusive value: invalid entry");
    }
};

// Intensities M(x, s | R) for the overlap classes R = 0 (no conjectured link)
// and R = 1 (conjectured link to the querying node).
struct ReferenceDistribution {
    int k = 0, s = 0;
    std::array<std::vector<double>, 2> tables;
    std::array<bool, 2> empty_class{false, false};

    ReferenceDistribution() = default;
    ReferenceDistribution(int types, int support) : k(types), s(support) {
        for (auto& t : tables) t.assign(static_cast<std::size_t>(types) * support, 0.0);
    }

    double& at(int x, int si, int r) { return tables[r][static_cast<std::size_t>(x) * s + si]; }
    double at(int x, int si, int r) const {
        return tables[r][static_cast<std::size_t>(x) * s + si];
    }
    double mass(int x, int r) const {
        double t = 0.0;
        for (int si = 0; si < s; ++si) t += at(x, si, r);
        return t;
    }
    double mass(int r) const {
        double t = 0.0;
        for (int x = 0; x < k; ++x) t += mass(x, r);
        return t;
    }

    void validate() const {
        for (const auto& t : tables)
            for (double v : t)
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw DomainError("reference distribution: invalid intensity");
    }
};

struct AggregateState {
    ReferenceDistribution m;
    InclusiveValueFn eta;
};

struct FixedPointDiagnostics {
    int iterations = 0;
    double final_residual = std::numeric_limits<double>::infinity();
    std::vector<double> residuals;
    std::vector<double> contraction_ratios;
    bool converged = false;
};

inline double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double sup_distance(const ReferenceDistribution& a, const ReferenceDistribution& b) {
    return std::max(sup_distance(a.tables[0], b.tables[0]), sup_distance(a.tables[1], b.tables[1]));
}

// ---------------------------------------------------------------- empirical side

// I*_i = n^{-1/2} sum_j D*_ji exp{U*_ij}, payoffs at L + {ij}.
inline double empirical_inclusive_value(const UndirectedNetwork& L, const ProposalNetwork& D,
                                        const PayoffModel& m, const std::vector<int>& X, int i) {
    const int n = L.n();
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j == i || !D.get(j, i)) continue;
        acc += std::exp(systematic_pair(m, L, X, i, j).first);
    }
    return acc / std::sqrt(static_cast<double>(n));
}

struct EmpiricalInclusiveValue {
    InclusiveValueFn eta;
    std::vector<int> counts;     // nodes per cell
    std::vector<double> values;  // I*_i per node
};

// Cell means of I*_i by (x, degree); unobserved cells take the type mean.
inline EmpiricalInclusiveValue empirical_inclusive_value_table(const UndirectedNetwork& L,
                                                               const ProposalNetwork& D,
                                                               const PayoffModel& m,
                                                               const std::vector<int>& X) {
    require_degree_model(m);
    const int K = m.types.size(), S = m.node_stat.support_size(), n = L.n();
    EmpiricalInclusiveValue out;
    out.eta = InclusiveValueFn(K, S);
    out.counts.assign(static_cast<std::size_t>(K) * S, 0);
    out.values.resize(n);
    // incoming proposals per node, one pass over the out-lists
    std::vector<double> acc(n, 0.0);
    for (int j = 0; j < n; ++j)
        for (int i : D.out(j)) acc[i] += std::exp(systematic_pair(m, L, X, i, j).first);
    std::vector<double> type_sum(K, 0.0);
    std::vector<int> type_cnt(K, 0);
    for (int i = 0; i < n; ++i) {
        double v = acc[i] / std::sqrt(static_cast<double>(n));
        out.values[i] = v;
        int c = X[i] * S + static_cast<int>(m.node_stat.clamp_count(L.degree(i)));
        out.eta.table[c] += v;
        ++out.counts[c];
        type_sum[X[i]] += v;
        ++type_cnt[X[i]];
    }
    for (int x = 0; x < K; ++x)
        for (int si = 0; si < S; ++si) {
            int c = x * S + si;
            if (out.counts[c] > 0) out.eta.table[c] /= out.counts[c];
            else out.eta.table[c] = type_cnt[x] > 0 ? type_sum[x] / type_cnt[x] : 0.0;
        }
    return out;
}

// Pre-network lists D_ij0 = 1{U_bar + sigma eps_ij >= MC_i} from dense shocks.
inline std::vector<std::vector<int>> pre_network(const ShockRealization& s, double u_bar) {
    std::vector<std::vector<int>> pre(s.n);
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            if (i != j && u_bar + s.sigma * s.eps(i, j) >= s.mc[i]) pre[i].push_back(j);
    return pre;
}

inline std::vector<std::vector<int>> pre_network(const SparseShockRealization& s) {
    std::vector<std::vector<int>> pre(s.n);
    for (int i = 0; i < s.n; ++i)
        for (auto [j, e] : s.pre[i]) pre[i].push_back(j);
    return pre;
}

// M_hat(x, s | R): numerator (1/n) #{(k, i): x_k = x, s*_k(R) = s, D_ik0 = D_ki0 = 1},
// denominator (1/n^2) #{(k, i): k != i}. Potential values are mechanical:
// s*(1) counts a link to i, s*(0) removes it.
inline ReferenceDistribution empirical_reference_distribution(
    const UndirectedNetwork& L, const std::vector<std::vector<int>>& pre,
    const std::vector<int>& X, const PayoffModel& m) {
    require_degree_model(m);
    const int n = L.n(), K = m.types.size(), S = m.node_stat.support_size();
    ReferenceDistribution out(K, S);
    if (n < 2) {
        out.empty_class = {true, true};
        return out;
    }
    auto mutual = [&](int a, int b) {
        return std::binary_search(pre[a].begin(), pre[a].end(), b) &&
               std::binary_search(pre[b].begin(), pre[b].end(), a);
    };
    double den = static_cast<double>(n) * (n - 1) / (static_cast<double>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int k : pre[i]) {
            if (!mutual(i, k)) continue;
            bool lk = L.has_edge(i, k);
            int d = L.degree(k);
            int s1 = static_cast<int>(m.node_stat.clamp_count(d + (lk ? 0 : 1)));
            int s0 = static_cast<int>(m.node_stat.clamp_count(d - (lk ? 1 : 0)));
            out.at(X[k], s1, 1) += 1.0 / n / den;
            out.at(X[k], s0, 0) += 1.0 / n / den;
        }
    return out;
}

// ---------------------------------------------------------------- limiting maps

// B = sum_{x', s'} s' M(x', s' | 1)
inline double degree_mass(const ReferenceDistribution& m, const PayoffModel& model) {
    const auto& sup = model.s_support();
    double b = 0.0;
    for (int x = 0; x < m.k; ++x)
        for (int si = 0; si < m.s; ++si) b += sup[si] * m.at(x, si, 1);
    return b;
}

inline double contraction_bound(const ReferenceDistribution& m, const PayoffModel& model) {
    double be = degree_mass(m, model) * std::exp(2.0 * model.u_bar());
    return be / (1.0 + be);
}

// Psi2[M, H](x, s) = sum_{x', s'} s' exp{U*(x,x';s,s') + U*(x',x;s',s) - 2 U_bar} M(x',s'|1) / (1 + H(x',s'))
inline InclusiveValueFn psi2_apply(const ReferenceDistribution& m, const InclusiveValueFn& eta,
                                   const PayoffModel& model) {
    require_degree_model(model);
    const auto& sup = model.s_support();
    const int K = m.k, S = m.s;
    const double ub2 = 2.0 * model.u_bar();
    InclusiveValueFn out(K, S);
    for (int x = 0; x < K; ++x)
        for (int si = 0; si < S; ++si) {
            double acc = 0.0;
            for (int x2 = 0; x2 < K; ++x2)
                for (int s2 = 0; s2 < S; ++s2) {
                    double w = sup[s2] * m.at(x2, s2, 1);
                    if (w == 0.0) continue;
                    double u = model.u(x, x2, sup[si], sup[s2]) + model.u(x2, x, sup[s2], sup[si]);
                    acc += w * std::exp(u - ub2) / (1.0 + eta.at(x2, s2));
                }
            out.at(x, si) = acc;
        }
    return out;
}

struct InclusiveValueOptions {
    double tol = 1e-10;
    int max_iter = 1000;
};

// Iterates log H <- log Psi2[M, H] from H = 1 (or `init`) in the sup norm.
inline std::pair<InclusiveValueFn, FixedPointDiagnostics> solve_inclusive_value(
    const ReferenceDistribution& m, const PayoffModel& model, InclusiveValueOptions opt = {},
    std::optional<InclusiveValueFn> init = std::nullopt) {
    require_degree_model(model);
    FixedPointDiagnostics diag;
    const int K = m.k, S = m.s;
    if (degree_mass(m, model) <= 0.0) {
        diag.converged = true;
        diag.final_residual = 0.0;
        return {InclusiveValueFn(K, S, 0.0), diag};
    }
    InclusiveValueFn eta = init ? *init : InclusiveValueFn(K, S, 1.0);
    for (auto& v : eta.table) v = std::max(v, 1e-300);
    double prev = -1.0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        auto next = psi2_apply(m, eta, model);
        double res = 0.0;
        for (std::size_t c = 0; c < next.table.size(); ++c)
            res = std::max(res, std::abs(std::log(next.table[c]) - std::log(eta.table[c])));
        diag.residuals.push_back(res);
        if (prev > 0.0) diag.contraction_ratios.push_back(res / prev);
        prev = res;
        eta = std::move(next);
        diag.iterations = it;
        diag.final_residual = res;
        if (res < opt.tol) {
            diag.converged = true;
            break;
        }
    }
    return {eta, diag};
}

struct Psi1Options {
    int r_max = -1;  // >= 0 truncates neighborhoods at r_max members
};

struct Psi1Weights {
    double a = 0.0;     // unlinked member weight
    double b = 0.0;     // linked member weight
    double lead = 0.0;  // exp{U_bar} / (1 + H(x, s))
};

// Per-member weights of the neighborhood product for a focal node in cell (x, s).
inline Psi1Weights psi1_weights(const ReferenceDistribution& m, const InclusiveValueFn& eta,
                                const PayoffModel& model, int x, int si) {
    const auto& sup = model.s_support();
    const double ub = model.u_bar();
    const double h = eta.at(x, si);
    Psi1Weights w;
    w.lead = std::exp(ub) / (1.0 + h);
    for (int x2 = 0; x2 < m.k; ++x2)
        for (int s2 = 0; s2 < m.s; ++s2) {
            double m1 = m.at(x2, s2, 1), m0 = m.at(x2, s2, 0);
            double uo = model.u(x, x2, sup[si], sup[s2]);
            double ui = model.u(x2, x, sup[s2], sup[si]);
            if (m1 > 0.0) w.b += m1 * std::exp(uo + ui - 2.0 * ub) / (1.0 + h);
            if (m0 > 0.0)
                w.a += m0 * (std::exp(-2.0 * ub) + std::exp(uo - 2.0 * ub) / (1.0 + h) +
                             std::exp(ui - 2.0 * ub));
        }
    return w;
}

// Psi1[M, H](x, s | R): the focal node holds R conjectured links plus l linked
// neighborhood members, s = min(l + R, cap). With unlinked weight a and linked
// weight b the neighborhood sum is sum_r C(r,l) b^l a^{r-l} / r! = e^a b^l / l!,
// and at the cap the l-sum is e^{a+b} P(Pois(b) >= cap - R). With opt.r_max the
// sums stop at r_max members. Each (x, R) slice keeps the mass e^{2 U_bar} pi_X(x).
inline ReferenceDistribution psi1_apply(const ReferenceDistribution& m,
                                        const InclusiveValueFn& eta, const PayoffModel& model,
                                        Psi1Options opt = {}) {
    require_degree_model(model);
    const int K = m.k, S = m.s, cap = S - 1;
    const double mu_total = std::exp(2.0 * model.u_bar());
    const double neg_inf = -std::numeric_limits<double>::infinity();
    ReferenceDistribution out(K, S);
    for (int x = 0; x < K; ++x) {
        std::vector<Psi1Weights> w(S);
        for (int si = 0; si < S; ++si) w[si] = psi1_weights(m, eta, model, x, si);
        for (int R = 0; R < 2; ++R) {
            std::vector<double> lnum(S, neg_inf);
            for (int si = 0; si < S; ++si) {
                int l = si - R;
                if (l < 0) continue;
                const auto& ww = w[si];
                double v;
                if (opt.r_max >= 0) {
                    // sum_{l' in range} b^l' / l'! * sum_{q <= r_max - l'} a^q / q!
                    int hi = si == cap ? opt.r_max : l;
                    double acc = 0.0;
                    for (int lp = l; lp <= std::min(hi, opt.r_max); ++lp) {
                        double bl = 1.0;
                        for (int t = 1; t <= lp; ++t) bl *= ww.b / t;
                        double as = 0.0, term = 1.0;
                        for (int q = 0; q <= opt.r_max - lp; ++q) {
                            as += term;
                            term *= ww.a / (q + 1);
                        }
                        acc += bl * as;
                    }
                    v = acc > 0.0 ? std::log(ww.lead) + std::log(acc) : neg_inf;
                } else {
                    v = std::log(ww.lead) + ww.a;
                    if (si < cap) {
                        if (l > 0) v += ww.b > 0.0 ? l * std::log(ww.b) - std::lgamma(l + 1.0) : neg_inf;
                    } else if (l > 0) {
                        double tail =
                            ww.b > 0.0 ? boost::math::gamma_p(static_cast<double>(l), ww.b) : 0.0;
                        v += tail > 0.0 ? ww.b + std::log(tail) : neg_inf;
                    }
                }
                lnum[si] = v;
            }
            double mx = *std::max_element(lnum.begin(), lnum.end());
            double mass = mu_total * model.types.weights[x];
            if (!std::isfinite(mx)) continue;
            double tot = 0.0;
            for (double v : lnum) tot += std::exp(v - mx);
            for (int si = 0; si < S; ++si) out.at(x, si, R) = mass * std::exp(lnum[si] - mx) / tot;
        }
    }
    return out;
}

// Reference value of Psi1 by explicit enumeration of neighborhoods with at most
// r_max members, each member in a cell with one of the four proposal patterns.
inline ReferenceDistribution psi1_enumerate(const ReferenceDistribution& m,
                                            const InclusiveValueFn& eta, const PayoffModel& model,
                                            int r_max) {
    require_degree_model(model);
    const int K = m.k, S = m.s, cap = S - 1;
    const auto& sup = model.s_support();
    const double ub = model.u_bar();
    const double mu_total = std::exp(2.0 * ub);
    ReferenceDistribution out(K, S);
    // one member option: (cell, class, D_iq, D_qi)
    struct Opt {
        int x2, s2, dio, doi;
    };
    std::vector<Opt> opts;
    for (int x2 = 0; x2 < K; ++x2)
        for (int s2 = 0; s2 < S; ++s2)
            for (int dio = 0; dio < 2; ++dio)
                for (int doi = 0; doi < 2; ++doi) opts.push_back({x2, s2, dio, doi});
    for (int x = 0; x < K; ++x)
        for (int R = 0; R < 2; ++R) {
            std::vector<double> num(S, 0.0);
            for (int si = 0; si < S; ++si) {
                double h = eta.at(x, si);
                double acc = 0.0;
                for (int r = 0; r <= r_max; ++r) {
                    std::vector<std::size_t> idx(r, 0);
                    double rfact = factorial(r);
                    while (true) {
                        int linked = 0;
                        double w = 1.0;
                        for (int q = 0; q < r; ++q) {
                            const auto& o = opts[idx[q]];
                            bool lk = o.dio && o.doi;
                            linked += lk;
                            double mm = m.at(o.x2, o.s2, lk ? 1 : 0);
                            double uo = model.u(x, o.x2, sup[si], sup[o.s2]);
                            double ui = model.u(o.x2, x, sup[o.s2], sup[si]);
                            w *= mm * std::exp(o.dio * uo + o.doi * ui - 2.0 * ub) /
                                 std::pow(1.0 + h, o.dio);
                        }
                        if (std::min(linked + R, cap) == si) acc += w / rfact;
                        int q = r - 1;
                        while (q >= 0 && idx[q] + 1 == opts.size()) idx[q--] = 0;
                        if (q < 0) break;
                        ++idx[q];
                    }
                }
                num[si] = std::exp(ub) / (1.0 + h) * acc;
            }
            double tot = 0.0;
            for (double v : num) tot += v;
            for (int si = 0; si < S; ++si)
                out.at(x, si, R) = tot > 0.0 ? mu_total * model.types.weights[x] * num[si] / tot : 0.0;
        }
    return out;
}

// Start of the joint iteration: all mass at s = R.
inline ReferenceDistribution initial_reference(const PayoffModel& model) {
    const int K = model.types.size(), S = model.node_stat.support_size();
    ReferenceDistribution m(K, S);
    double mu = std::exp(2.0 * model.u_bar());
    for (int x = 0; x < K; ++x)
        for (int R = 0; R < 2; ++R) m.at(x, std::min(R, S - 1), R) = mu * model.types.weights[x];
    return m;
}

// Random intensities with the same per-(x, R) masses; R = 1 puts no mass at s = 0.
inline ReferenceDistribution random_reference(const PayoffModel& model, Rng& rng) {
    const int K = model.types.size(), S = model.node_stat.support_size();
    ReferenceDistribution m(K, S);
    double mu = std::exp(2.0 * model.u_bar());
    for (int x = 0; x < K; ++x)
        for (int R = 0; R < 2; ++R) {
            std::vector<double> w(S, 0.0);
            double t = 0.0;
            for (int si = 0; si < S; ++si) {
                if (R == 1 && si == 0 && S > 1) continue;
                w[si] = exponential1(rng);
                t += w[si];
            }
            for (int si = 0; si < S; ++si) m.at(x, si, R) = mu * model.types.weights[x] * w[si] / t;
        }
    return m;
}

struct JointOptions {
    double alpha = 0.5;
    double tol = 1e-8;
    int max_outer = 500;
    InclusiveValueOptions eta{};
    Psi1Options psi1{};
    int extra_starts = 0;  // random initial M for the uniqueness check
    std::uint64_t seed = 1;
};

struct JointResult {
    AggregateState state;
    FixedPointDiagnostics diagnostics;
    bool unique = true;
    double start_discrepancy = 0.0;  // sup distance between start solutions
    std::vector<FixedPointDiagnostics> start_diagnostics;
};

inline std::pair<AggregateState, FixedPointDiagnostics> solve_joint_from(
    ReferenceDistribution m, const PayoffModel& model, const JointOptions& opt) {
    FixedPointDiagnostics diag;
    InclusiveValueFn eta;
    std::optional<InclusiveValueFn> warm;
    double prev = -1.0;
    for (int it = 1; it <= opt.max_outer; ++it) {
        auto [e, d] = solve_inclusive_value(m, model, opt.eta, warm);
        eta = e;
        warm = e;
        auto next = psi1_apply(m, eta, model, opt.psi1);
        double res = sup_distance(next, m);
        diag.residuals.push_back(res);
        if (prev > 0.0) diag.contraction_ratios.push_back(res / prev);
        prev = res;
        diag.iterations = it;
        diag.final_residual = res;
        if (res < opt.tol) {
            diag.converged = true;
            break;
        }
        for (int R = 0; R < 2; ++R)
            for (std::size_t c = 0; c < m.tables[R].size(); ++c)
                m.tables[R][c] = (1.0 - opt.alpha) * m.tables[R][c] + opt.alpha * next.tables[R][c];
    }
    // report the inclusive value consistent with the final M
    eta = solve_inclusive_value(m, model, opt.eta, warm).first;
    return {AggregateState{m, eta}, diag};
}

inline JointResult solve_joint(const PayoffModel& model, JointOptions opt = {}) {
    require_degree_model(model);
    JointResult out;
    auto [st, dg] = solve_joint_from(initial_reference(model), model, opt);
    out.state = st;
    out.diagnostics = dg;
    out.start_diagnostics.push_back(dg);
    Rng rng(derive_seed("solve_joint", opt.seed));
    for (int k = 0; k < opt.extra_starts; ++k) {
        auto [s2, d2] = solve_joint_from(random_reference(model, rng), model, opt);
        out.start_diagnostics.push_back(d2);
        double dist = std::max(sup_distance(s2.m, st.m), sup_distance(s2.eta.table, st.eta.table));
        out.start_discrepancy = std::max(out.start_discrepancy, dist);
        if (!d2.converged || dist > 10.0 * opt.tol) out.unique = false;
    }
    if (!dg.converged) out.unique = false;
    return out;
}

// ---------------------------------------------------------------- scalar oracle

// E[min(1 + N, cap)], N ~ Poisson(lambda)
inline double mean_clamped_degree(double lambda, int cap) {
    if (cap <= 0) return 0.0;
    double p = std::exp(-lambda), below = 0.0, acc = 0.0;
    for (int k = 0; k < cap - 1; ++k) {
        acc += (1.0 + k) * p;
        below += p;
        p *= lambda / (k + 1);
    }
    return acc + cap * std::max(0.0, 1.0 - below);
}

struct ScalarFixedPoint {
    double h = 0.0;       // inclusive value
    double m_bar = 0.0;   // degree mass sum s' M(s'|1)
    double lambda = 0.0;  // Poisson mean of linked neighbors
};

// Single type, constant U* = c: h (1 + h) = e^{2c} E[min(1 + Pois(e^{2c}/(1+h)), cap)].
inline ScalarFixedPoint scalar_fixed_point(double c, int cap) {
    const double e2c = std::exp(2.0 * c);
    auto f = [&](double h) { return h * (1.0 + h) - e2c * mean_clamped_degree(e2c / (1.0 + h), cap); };
    ScalarFixedPoint out;
    if (cap <= 0) return out;
    double hi = 1.0;
    while (f(hi) < 0.0) hi *= 2.0;
    boost::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(50),
                                               iters);
    out.h = 0.5 * (r.first + r.second);
    out.lambda = e2c / (1.0 + out.h);
    out.m_bar = std::exp(2.0 * std::abs(c)) * mean_clamped_degree(out.lambda, cap);
    return out;
}

// ---------------------------------------------------------------- limit moment

enum class LimitMode { logit, direct };

struct LimitOptions {
    int mc_budget = 10000;
    LimitMode mode = LimitMode::logit;
    std::uint64_t seed = 1;
    int q_max = 64;
};

struct MonteCarloEstimate {
    std::vector<double> value;
    std::vector<double> se;
};

// Draws a member cell (x, s) from the normalized intensity of class R.
inline std::pair<int, int> draw_cell(const ReferenceDistribution& m, int R, Rng& rng) {
    double tot = m.mass(R);
    double u = uniform01(rng) * tot, acc = 0.0;
    for (int x = 0; x < m.k; ++x)
        for (int si = 0; si < m.s; ++si) {
            acc += m.at(x, si, R);
            if (u < acc) return {x, si};
        }
    for (int c = m.k * m.s - 1; c >= 0; --c)
        if (m.tables[R][c] > 0.0) return {c / m.s, c % m.s};
    return {0, 0};
}

inline int draw_cell_given_x(const ReferenceDistribution& m, int x, int R, Rng& rng) {
    double tot = m.mass(x, R);
    if (tot <= 0.0) return 0;
    double u = uniform01(rng) * tot, acc = 0.0;
    for (int si = 0; si < m.s; ++si) {
        acc += m.at(x, si, R);
        if (u < acc) return si;
    }
    return m.s - 1;
}

struct LimitMember {
    int x = 0;
    int s1 = 0;  // potential value index with the conjectured link
    double u_out = 0.0, u_in = 0.0;
    double mc = 0.0;  // member marginal cost (finite-n representation only)
};

// Smallest s in the support with s = min(k + #linked members at s, cap);
// `link(member, s)` decides a member link at focal value s.
template <class LinkFn>
int consistent_statistic(int k, int cap, const std::vector<LimitMember>& members, LinkFn&& link) {
    for (int s = std::min(k, cap); s <= cap; ++s) {
        int cnt = 0;
        for (const auto& q : members) cnt += link(q, s) ? 1 : 0;
        if (std::min(k + cnt, cap) == s) return s;
    }
    int s = std::min(k, cap);
    for (int it = 0; it < 2 * cap + 2; ++it) {
        int cnt = 0;
        for (const auto& q : members) cnt += link(q, s) ? 1 : 0;
        s = std::min(k + cnt, cap);
    }
    return s;
}

inline std::vector<LimitMember> draw_limit_neighborhood(const ReferenceDistribution& m, int q_max,
                                                        Rng& rng) {
    double mu = m.mass(0);
    int r = std::min(poisson(rng, mu), q_max);
    std::vector<LimitMember> v(r);
    for (auto& q : v) {
        q.x = draw_cell(m, 0, rng).first;
        q.s1 = draw_cell_given_x(m, q.x, 1, rng);
        q.u_out = uniform01(rng);
        q.u_in = uniform01(rng);
    }
    return v;
}

// m0 = kappa^{-1} E[ sum_{P in A, |P| = k_min} c(x, P) w(P) ] with
// w(P) = prod_{links de} e^{U*_de + U*_ed} * prod_d A_d^{k_d}. Logit mode uses
// E[A^k] = k!; direct mode draws A_d ~ Exp(1).
inline MonteCarloEstimate limit_moment(const AggregateState& state, const MomentSpec& spec,
                                       const PayoffModel& model, LimitOptions opt = {}) {
    require_degree_model(model);
    spec.event.validate();
    const int D = spec.event.d, q = spec.instrument.q;
    const int kmin = spec.event.min_links();
    if (spec.p_fixed > 0.0 || std::abs(spec.rho - kmin) > 1e-12)
        throw DomainError("limit_moment: p_n must be kappa n^{-k} with k the minimal link count of A");
    if (!(spec.kappa > 0.0)) throw DomainError("limit_moment: kappa must be positive");
    std::vector<std::uint32_t> patterns;
    for (auto c : spec.event.configurations)
        if (std::popcount(c) == kmin) patterns.push_back(c);
    const auto& sup = model.s_support();
    const int cap = model.node_stat.support_size() - 1;
    const double ub = model.u_bar();
    Rng rng(derive_seed("limit_moment", opt.seed));
    std::vector<double> sum(q, 0.0), sum2(q, 0.0);
    std::vector<int> xs(D), kd(D), sd(D);
    std::vector<double> A(D, 1.0);
    std::vector<std::vector<LimitMember>> nb(D);
    for (int it = 0; it < opt.mc_budget; ++it) {
        for (int d = 0; d < D; ++d) {
            xs[d] = model.types.sample(rng);
            nb[d] = draw_limit_neighborhood(state.m, opt.q_max, rng);
            if (opt.mode == LimitMode::direct) A[d] = exponential1(rng);
        }
        std::vector<double> draw(q, 0.0);
        for (auto P : patterns) {
            std::fill(kd.begin(), kd.end(), 0);
            for (int a = 0; a < D; ++a)
                for (int b = a + 1; b < D; ++b)
                    if ((P >> pair_index(a, b, D)) & 1u) {
                        ++kd[a];
                        ++kd[b];
                    }
            for (int d = 0; d < D; ++d) {
                auto link = [&](const LimitMember& mq, int s) {
                    return mq.u_out < std::exp(model.u(xs[d], mq.x, sup[s], sup[mq.s1]) - ub) &&
                           mq.u_in < std::exp(model.u(mq.x, xs[d], sup[mq.s1], sup[s]) - ub);
                };
                sd[d] = consistent_statistic(kd[d], cap, nb[d], link);
            }
            double w = 1.0;
            for (int a = 0; a < D; ++a)
                for (int b = a + 1; b < D; ++b)
                    if ((P >> pair_index(a, b, D)) & 1u)
                        w *= std::exp(model.u(xs[a], xs[b], sup[sd[a]], sup[sd[b]]) +
                                      model.u(xs[b], xs[a], sup[sd[b]], sup[sd[a]]));
            for (int d = 0; d < D; ++d)
                w *= opt.mode == LimitMode::logit ? factorial(kd[d]) : std::pow(A[d], kd[d]);
            auto c = symmetrized_contribution(spec.event, spec.instrument, xs, P);
            for (int k = 0; k < q; ++k) draw[k] += c[k] * w / spec.kappa;
        }
        for (int k = 0; k < q; ++k) {
            sum[k] += draw[k];
            sum2[k] += draw[k] * draw[k];
        }
    }
    MonteCarloEstimate out{std::vector<double>(q), std::vector<double>(q)};
    double B = opt.mc_budget;
    for (int k = 0; k < q; ++k) {
        out.value[k] = sum[k] / B;
        double var = B > 1 ? std::max(0.0, (sum2[k] - B * out.value[k] * out.value[k]) / (B - 1)) : 0.0;
        out.se[k] = std::sqrt(var / B);
    }
    return out;
}

}  // namespace psnlab
