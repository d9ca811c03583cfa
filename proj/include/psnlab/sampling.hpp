#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "psnlab/aggstate.hpp"
#include "psnlab/model.hpp"
#include "psnlab/moments.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

// One neighborhood member. Shocks are stored as uniform ranks inside the
// pre-link region, so acceptance is u < P(accept | pre-link).
struct NeighborMember {
    int x = 0;
    int s0 = 0;  // potential value index, class R = 0
    int s1 = 0;  // potential value index, class R = 1
    double mc = 0.0;
    double u_out = 0.5;  // focal node's shock toward the member
    double u_in = 0.5;   // member's shock toward the focal node
};

struct Neighborhood {
    std::vector<NeighborMember> members;
};

struct SamplingOptions {
    int q_max = 64;
};

// Poisson(total intensity) members truncated at q_max (resampled above it); cells
// from the normalized intensity, R-specific potential values drawn independently.
inline Neighborhood draw_neighborhood(const ReferenceDistribution& m, const ScalingSequence& sc,
                                      const ShockDistribution& shock, Rng& rng,
                                      SamplingOptions opt = {}) {
    Neighborhood nb;
    double mu = m.mass(0);
    if (!(mu > 0.0)) return nb;
    // P(Poisson(mu) > q_max) = P(q_max + 1, mu)
    if (mu > 0.25 * opt.q_max && boost::math::gamma_p(opt.q_max + 1.0, mu) > 1e-6)
        throw DomainError("draw_neighborhood: intensity " + std::to_string(mu) +
                          " puts non-negligible mass above q_max");
    int r;
    do r = poisson(rng, mu);
    while (r > opt.q_max);
    nb.members.resize(r);
    for (auto& q : nb.members) {
        q.x = draw_cell(m, 0, rng).first;
        q.s0 = draw_cell_given_x(m, q.x, 0, rng);
        q.s1 = draw_cell_given_x(m, q.x, 1, rng);
        q.mc = draw_marginal_cost(sc, shock, rng);
        q.u_out = uniform01(rng);
        q.u_in = uniform01(rng);
    }
    return nb;
}

// P(U + sigma eps > MC | U_bar + sigma eps >= MC)
inline double pre_link_acceptance(double u, double u_bar, double mc, double sigma,
                                  const ShockDistribution& shock) {
    double den = shock.survival((mc - u_bar) / sigma);
    if (den <= 0.0) return 0.0;
    return std::min(1.0, shock.survival((mc - u) / sigma) / den);
}

struct EventProbability {
    double value = 0.0;
    double se = 0.0;
};

// pi~_n(A | x): Monte Carlo over marginal costs and neighborhoods of the polyad
// nodes, Rao-Blackwellized over the internal link patterns. Each pattern P
// receives prod_{pairs} p or (1 - p) with p = S((MC_d - U*_de)/sigma) S((MC_e - U*_ed)/sigma),
// statistics taken as the smallest consistent potential values given P
// (payoffs of absent pairs at P + {de}); pattern weights are normalized.
inline EventProbability simulate_event_prob(const AggregateState& state, const MomentSpec& spec,
                                            const std::vector<int>& xcell,
                                            const PayoffModel& model, int n, int mc_budget,
                                            std::uint64_t seed, SamplingOptions opt = {}) {
    require_degree_model(model);
    spec.event.validate();
    const int D = spec.event.d;
    if (static_cast<int>(xcell.size()) != D) throw DomainError("simulate_event_prob: cell size");
    if (mc_budget < 2) throw DomainError("simulate_event_prob: budget must be at least 2");
    const auto sc = scaling(n, model.shock);
    const auto& shock = model.shock;
    const auto& sup = model.s_support();
    const int cap = model.node_stat.support_size() - 1;
    const double ub = model.u_bar(), sigma = sc.sigma_n;
    const int pairs = pair_count(D);
    const std::uint32_t npat = 1u << pairs;
    Instrument one;
    std::vector<double> in_a(npat);
    for (std::uint32_t P = 0; P < npat; ++P)
        in_a[P] = symmetrized_contribution(spec.event, one, xcell, P)[0];
    Rng rng(derive_seed("simulate_event_prob", seed));
    std::vector<double> mc(D);
    std::vector<Neighborhood> nb(D);
    // sd[d][k]: consistent statistic of node d with k polyad links
    std::vector<std::vector<int>> sd(D, std::vector<int>(D, 0));
    double sum = 0.0, sum2 = 0.0;
    for (int it = 0; it < mc_budget; ++it) {
        for (int d = 0; d < D; ++d) {
            mc[d] = draw_marginal_cost(sc, shock, rng);
            nb[d] = draw_neighborhood(state.m, sc, shock, rng, opt);
            // neighbor links of d at focal value s
            std::vector<LimitMember> mem;
            for (const auto& q : nb[d].members) mem.push_back({q.x, q.s1, q.u_out, q.u_in, q.mc});
            for (int k = 0; k < D; ++k) {
                auto link = [&](const LimitMember& q, int s) {
                    double a = pre_link_acceptance(model.u(xcell[d], q.x, sup[s], sup[q.s1]), ub,
                                                   mc[d], sigma, shock);
                    double b = pre_link_acceptance(model.u(q.x, xcell[d], sup[q.s1], sup[s]), ub,
                                                   q.mc, sigma, shock);
                    return q.u_out < a && q.u_in < b;
                };
                sd[d][k] = consistent_statistic(k, cap, mem, link);
            }
        }
        double num = 0.0, den = 0.0;
        std::vector<int> kd(D);
        for (std::uint32_t P = 0; P < npat; ++P) {
            std::fill(kd.begin(), kd.end(), 0);
            for (int a = 0; a < D; ++a)
                for (int b = a + 1; b < D; ++b)
                    if ((P >> pair_index(a, b, D)) & 1u) {
                        ++kd[a];
                        ++kd[b];
                    }
            double w = 1.0;
            for (int a = 0; a < D && w > 0.0; ++a)
                for (int b = a + 1; b < D; ++b) {
                    bool on = (P >> pair_index(a, b, D)) & 1u;
                    int ka = std::min(kd[a] + (on ? 0 : 1), D - 1);
                    int kb = std::min(kd[b] + (on ? 0 : 1), D - 1);
                    double sa = sup[sd[a][ka]], sb = sup[sd[b][kb]];
                    double p = shock.survival((mc[a] - model.u(xcell[a], xcell[b], sa, sb)) / sigma) *
                               shock.survival((mc[b] - model.u(xcell[b], xcell[a], sb, sa)) / sigma);
                    w *= on ? p : 1.0 - p;
                }
            den += w;
            num += w * in_a[P];
        }
        double v = den > 0.0 ? num / den : 0.0;
        sum += v;
        sum2 += v * v;
    }
    EventProbability out;
    double B = mc_budget;
    out.value = sum / B;
    out.se = std::sqrt(std::max(0.0, (sum2 - B * out.value * out.value) / (B - 1)) / B);
    return out;
}

}  // namespace psnlab
