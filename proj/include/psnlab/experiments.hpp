#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "psnlab/aggstate.hpp"
#include "psnlab/moments.hpp"
#include "psnlab/parallel.hpp"
#include "psnlab/psn.hpp"
#include "psnlab/sampling.hpp"
#include "psnlab/stats.hpp"

namespace psnlab {

struct ExperimentAborted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RefusedModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- simulation

struct SimulatedNetwork {
    int n = 0;
    std::vector<int> X;
    UndirectedNetwork L;
    bool converged = false;
    CycleReport cycle;
    SparseShockRealization shocks;
};

// Replication `rep` at size n draws types, shocks and the sweep order from
// streams keyed by (label, seed, n, rep).
inline SimulatedNetwork simulate_network(const PayoffModel& m, int n, std::uint64_t seed,
                                         std::uint64_t rep, TatonnementOptions opt = {}) {
    if (n < 2) throw DomainError("simulate_network: n must be at least 2");
    SimulatedNetwork out;
    out.n = n;
    Rng trng = make_rng("types", seed, {static_cast<std::uint64_t>(n), rep});
    out.X.resize(n);
    for (auto& x : out.X) x = m.types.sample(trng);
    out.shocks = draw_sparse_shocks(m, n, derive_seed("shocks", seed, {static_cast<std::uint64_t>(n), rep}));
    Rng srng = make_rng("tatonnement", seed, {static_cast<std::uint64_t>(n), rep});
    auto res = tatonnement(m, out.shocks, out.X, srng, opt);
    if (auto* L = std::get_if<UndirectedNetwork>(&res)) {
        out.L = std::move(*L);
        out.converged = true;
    } else {
        out.L = UndirectedNetwork(n);
        out.cycle = std::get<CycleReport>(res);
    }
    return out;
}

// ---------------------------------------------------------------- plans and reports

struct ExperimentPlan {
    PayoffModel model;
    std::vector<int> n_grid{100, 400, 1600};
    int reps = 200;
    std::uint64_t seed = 1;
    MomentSpec spec;
    int threads = 0;
    int mc_budget = 20000;
    TatonnementOptions tatonnement{};
    JointOptions joint{};

    void validate() const {
        if (n_grid.empty()) throw DomainError("plan: empty n grid");
        for (std::size_t k = 0; k < n_grid.size(); ++k) {
            if (n_grid[k] < 2) throw DomainError("plan: n must be at least 2");
            if (k > 0 && n_grid[k] <= n_grid[k - 1]) throw DomainError("plan: n grid must increase");
        }
        if (reps < 2) throw DomainError("plan: at least 2 replications");
        if (mc_budget < 2) throw DomainError("plan: Monte Carlo budget must be at least 2");
    }
};

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

using Fields = std::vector<std::pair<std::string, double>>;

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // per-replication table
    std::vector<Fields> per_n;
    Fields summary;
    std::vector<Check> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    const Check* check(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    double summary_value(const std::string& key) const {
        for (const auto& [k, v] : summary)
            if (k == key) return v;
        throw std::out_of_range("summary key not found: " + key);
    }
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string to_csv(const ExperimentReport& r) {
    std::string out;
    for (std::size_t c = 0; c < r.columns.size(); ++c) out += (c ? "," : "") + r.columns[c];
    out += "\n";
    for (const auto& row : r.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
        out += "\n";
    }
    return out;
}

inline nlohmann::ordered_json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

inline nlohmann::ordered_json fields_json(const Fields& f) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : f) j[k] = json_number(v);
    return j;
}

inline nlohmann::ordered_json to_json(const ExperimentReport& r) {
    nlohmann::ordered_json j;
    j["experiment"] = r.experiment;
    j["seed"] = r.seed;
    j["passed"] = r.passed();
    j["summary"] = fields_json(r.summary);
    j["per_n"] = nlohmann::ordered_json::array();
    for (const auto& f : r.per_n) j["per_n"].push_back(fields_json(f));
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : r.checks)
        j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return j;
}

// ---------------------------------------------------------------- replication engine

// Sufficient row statistics of a dyadic contribution array Y_ij for the
// Hoeffding variance: sum_i R_i^2, sum_i R_i, sum_i Q_i with R_i = sum_j Y_ij
// and Q_i = sum_j Y_ij^2.
struct DyadicRowStats {
    int n = 0;
    double sum_r2 = 0, sum_r = 0, sum_q = 0;
};

inline DyadicRowStats dyadic_row_stats(const UndirectedNetwork& L, const std::vector<int>& X,
                                       const MomentSpec& spec, int num_types) {
    if (spec.event.d != 2) throw DomainError("dyadic_row_stats: D must be 2");
    const int n = L.n(), K = num_types;
    const double p = spec.p_n(n);
    std::vector<double> y0(K * K), y1(K * K);
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
            y0[a * K + b] = symmetrized_contribution(spec.event, spec.instrument, {a, b}, 0u)[0] / p;
            y1[a * K + b] = symmetrized_contribution(spec.event, spec.instrument, {a, b}, 1u)[0] / p;
        }
    std::vector<int> cnt(K, 0);
    for (int x : X) ++cnt[x];
    DyadicRowStats s;
    s.n = n;
    for (int i = 0; i < n; ++i) {
        int a = X[i];
        double r = -y0[a * K + a], q = -y0[a * K + a] * y0[a * K + a];
        for (int t = 0; t < K; ++t) {
            r += cnt[t] * y0[a * K + t];
            q += cnt[t] * y0[a * K + t] * y0[a * K + t];
        }
        for (int j : L.neighbors(i)) {
            int b = X[j];
            r += y1[a * K + b] - y0[a * K + b];
            q += y1[a * K + b] * y1[a * K + b] - y0[a * K + b] * y0[a * K + b];
        }
        s.sum_r2 += r * r;
        s.sum_r += r;
        s.sum_q += q;
    }
    return s;
}

struct HoeffdingResult {
    std::vector<double> c;       // c_k, k = 0..D: mean product at exactly k shared indices
    std::vector<double> sigma2;  // sigma^2_k, k = 0..D (sigma^2_0 = 0)
    double var_mean = 0.0;       // predicted variance of the tuple average
    double r_n = 0.0;
    double v_n = 0.0;
    std::vector<std::string> warnings;
};

// sigma^2_k = sum_{j=1}^k (-1)^{k-j} C(k,j) c_j; Var = sum_k C(D,k) C(n-D,D-k) / C(n,D) c_k;
// r_{n,k} = C(n,k) / sigma^2_k, r_n = min_k r_{n,k}, V_n = r_n Var.
inline HoeffdingResult assemble_hoeffding(int n, int D, std::vector<double> c) {
    HoeffdingResult h;
    c[0] = 0.0;
    h.c = c;
    h.sigma2.assign(D + 1, 0.0);
    for (int k = 1; k <= D; ++k) {
        double s = 0.0;
        for (int j = 1; j <= k; ++j) s += ((k - j) % 2 ? -1.0 : 1.0) * binom(k, j) * c[j];
        h.sigma2[k] = s;
    }
    double cnd = binom(n, D);
    for (int k = 1; k <= D; ++k) h.var_mean += binom(D, k) * binom(n - D, D - k) / cnd * c[k];
    h.r_n = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= D; ++k)
        if (h.sigma2[k] > 0.0) h.r_n = std::min(h.r_n, binom(n, k) / h.sigma2[k]);
    if (!std::isfinite(h.r_n)) h.r_n = 0.0;
    h.v_n = h.r_n * h.var_mean;
    return h;
}

inline HoeffdingResult hoeffding_variance(const DyadicRowStats& s, double center) {
    const double n = s.n, m = center;
    double sr2 = s.sum_r2 - 2.0 * (n - 1) * m * s.sum_r + n * (n - 1) * (n - 1) * m * m;
    double sq = s.sum_q - 2.0 * m * s.sum_r + n * (n - 1) * m * m;
    std::vector<double> c(3, 0.0);
    c[2] = sq / (n * (n - 1));
    c[1] = s.n > 2 ? (sr2 - sq) / (n * (n - 1) * (n - 2)) : 0.0;
    return assemble_hoeffding(s.n, 2, c);
}

// Values of a D-adic array over the unordered tuples of {0..n-1} in
// lexicographic order.
struct DadicArray {
    int n = 0, d = 2;
    std::vector<double> values;

    template <class F>
    static DadicArray from(int n, int d, F&& f) {
        DadicArray a;
        a.n = n;
        a.d = d;
        std::vector<int> idx(d);
        for (int k = 0; k < d; ++k) idx[k] = k;
        while (true) {
            a.values.push_back(f(idx));
            int k = d - 1;
            while (k >= 0 && idx[k] == n - d + k) --k;
            if (k < 0) break;
            ++idx[k];
            for (int t = k + 1; t < d; ++t) idx[t] = idx[t - 1] + 1;
        }
        return a;
    }
};

// Brute-force estimate over all pairs of tuples.
inline HoeffdingResult hoeffding_variance(const DadicArray& a, double center) {
    const int D = a.d;
    std::vector<std::vector<int>> tuples;
    {
        std::vector<int> idx(D);
        for (int k = 0; k < D; ++k) idx[k] = k;
        while (true) {
            tuples.push_back(idx);
            int k = D - 1;
            while (k >= 0 && idx[k] == a.n - D + k) --k;
            if (k < 0) break;
            ++idx[k];
            for (int t = k + 1; t < D; ++t) idx[t] = idx[t - 1] + 1;
        }
    }
    if (tuples.size() != a.values.size()) throw DomainError("hoeffding_variance: array size mismatch");
    std::vector<double> sum(D + 1, 0.0), cnt(D + 1, 0.0);
    for (std::size_t u = 0; u < tuples.size(); ++u)
        for (std::size_t v = 0; v < tuples.size(); ++v) {
            int k = 0;
            for (int x : tuples[u])
                if (std::binary_search(tuples[v].begin(), tuples[v].end(), x)) ++k;
            sum[k] += (a.values[u] - center) * (a.values[v] - center);
            cnt[k] += 1.0;
        }
    std::vector<double> c(D + 1, 0.0);
    std::vector<std::string> warn;
    for (int k = 0; k <= D; ++k) {
        if (cnt[k] < 2) {
            warn.push_back("level " + std::to_string(k) + " skipped: fewer than 2 tuple pairs");
            continue;
        }
        c[k] = sum[k] / cnt[k];
    }
    auto h = assemble_hoeffding(a.n, D, c);
    h.warnings = warn;
    return h;
}

struct ReplicationBatch {
    int n = 0;
    std::vector<char> converged;
    std::vector<std::vector<double>> moments;
    std::vector<DyadicRowStats> rows;

    std::size_t converged_count() const {
        return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 1));
    }
    std::vector<double> component(int k) const {
        std::vector<double> v;
        for (std::size_t r = 0; r < moments.size(); ++r)
            if (converged[r]) v.push_back(moments[r][k]);
        return v;
    }
};

inline ReplicationBatch run_replications(const ExperimentPlan& plan, int n, bool want_rows) {
    ReplicationBatch b;
    b.n = n;
    b.converged.assign(plan.reps, 0);
    b.moments.assign(plan.reps, {});
    if (want_rows) b.rows.assign(plan.reps, {});
    const int K = plan.model.types.size();
    parallel_for(plan.reps, plan.threads, [&](std::size_t r) {
        auto sim = simulate_network(plan.model, n, plan.seed, r, plan.tatonnement);
        if (!sim.converged) return;
        b.converged[r] = 1;
        b.moments[r] = compute_moment(sim.L, sim.X, plan.spec, K);
        if (want_rows) b.rows[r] = dyadic_row_stats(sim.L, sim.X, plan.spec, K);
    });
    if (b.converged_count() == 0)
        throw ExperimentAborted("no replication converged at n = " + std::to_string(n));
    return b;
}

struct LimitValue {
    double value = 0.0;
    double se = 0.0;
    bool unique = true;
};

inline LimitValue limit_value(const ExperimentPlan& plan, int extra_starts = 0) {
    auto jo = plan.joint;
    jo.extra_starts = extra_starts;
    jo.seed = derive_seed("joint", plan.seed);
    auto js = solve_joint(plan.model, jo);
    LimitOptions lo;
    lo.mc_budget = plan.mc_budget;
    lo.seed = derive_seed("limit", plan.seed);
    auto est = limit_moment(js.state, plan.spec, plan.model, lo);
    return {est.value[0], est.se[0], js.unique};
}

inline bool is_full_support(const SubnetworkEvent& e) {
    return e.configurations.size() == (std::size_t{1} << pair_count(e.d));
}

inline void add_replication_rows(ExperimentReport& rep, const ReplicationBatch& b, int q) {
    if (rep.columns.empty()) {
        rep.columns = {"n", "replication", "converged"};
        for (int k = 0; k < q; ++k) rep.columns.push_back("m" + std::to_string(k + 1));
    }
    for (std::size_t r = 0; r < b.converged.size(); ++r) {
        std::vector<double> row{static_cast<double>(b.n), static_cast<double>(r),
                                static_cast<double>(b.converged[r])};
        for (int k = 0; k < q; ++k) row.push_back(b.converged[r] ? b.moments[r][k] : std::nan(""));
        rep.rows.push_back(row);
    }
}

inline Fields accounting(const ReplicationBatch& b, int scheduled) {
    double conv = static_cast<double>(b.converged_count());
    return {{"n", static_cast<double>(b.n)},
            {"scheduled", static_cast<double>(scheduled)},
            {"converged", conv},
            {"excluded", scheduled - conv}};
}

// ---------------------------------------------------------------- LLN

inline ExperimentReport run_lln(const ExperimentPlan& plan) {
    plan.validate();
    ExperimentReport rep;
    rep.experiment = "lln";
    rep.seed = plan.seed;
    auto lim = limit_value(plan);
    rep.summary.push_back({"m0", lim.value});
    rep.summary.push_back({"m0_se", lim.se});
    std::vector<double> ns, med, spread;
    double max_dev = 0.0;
    for (int n : plan.n_grid) {
        auto b = run_replications(plan, n, false);
        add_replication_rows(rep, b, plan.spec.instrument.q);
        auto m = b.component(0);
        std::vector<double> dev;
        for (double v : m) dev.push_back(std::abs(v - lim.value));
        for (double d : dev) max_dev = std::max(max_dev, d);
        auto f = accounting(b, plan.reps);
        f.push_back({"mean", mean(m)});
        f.push_back({"median_abs_dev", median(dev)});
        f.push_back({"sd", std::sqrt(variance(m))});
        rep.per_n.push_back(f);
        ns.push_back(n);
        med.push_back(median(dev));
        spread.push_back(std::sqrt(variance(m)));
    }
    rep.summary.push_back({"max_abs_dev", max_dev});
    if (is_full_support(plan.spec.event)) {
        rep.checks.push_back({"lln.zero_deviation", max_dev == 0.0,
                              "max |m_hat - m0| = " + format_double(max_dev)});
        return rep;
    }
    bool dec = true;
    for (std::size_t k = 1; k < med.size(); ++k) dec = dec && med[k] < med[k - 1];
    std::string d;
    for (double v : med) d += (d.empty() ? "" : " > ") + format_double(v);
    rep.checks.push_back({"lln.median_decreasing", dec, "median |m_hat - m0|: " + d});
    if (ns.size() >= 2) {
        double slope = loglog_slope(ns, spread);
        rep.summary.push_back({"spread_slope", slope});
        rep.checks.push_back({"lln.spread_slope", std::abs(slope + 0.5) <= 0.15,
                              "log-log slope of sd = " + format_double(slope)});
    }
    return rep;
}

// ---------------------------------------------------------------- bias

inline ExperimentReport run_bias(const ExperimentPlan& plan) {
    plan.validate();
    ExperimentReport rep;
    rep.experiment = "bias";
    rep.seed = plan.seed;
    bool link_ok = true;
    for (auto c : plan.spec.event.configurations) {
        bool any = false;
        for (int s = 1; s < plan.spec.event.d; ++s)
            any = any || ((c >> pair_index(0, s, plan.spec.event.d)) & 1u);
        link_ok = link_ok && any;
    }
    if (!link_ok && !is_full_support(plan.spec.event))
        throw DomainError("run_bias: every configuration needs a link to the first node");
    auto lim = limit_value(plan);
    rep.summary.push_back({"m0", lim.value});
    rep.summary.push_back({"m0_se", lim.se});
    std::vector<double> ns, err, lo, hi;
    for (int n : plan.n_grid) {
        auto b = run_replications(plan, n, false);
        add_replication_rows(rep, b, plan.spec.instrument.q);
        auto m = b.component(0);
        double e = mean(m) - lim.value;
        double se = std::sqrt(variance(m) / m.size() + lim.se * lim.se);
        double rn = std::sqrt(static_cast<double>(n));
        auto f = accounting(b, plan.reps);
        f.push_back({"mean_error", e});
        f.push_back({"se", se});
        f.push_back({"B_hat", rn * e});
        f.push_back({"ci_low", rn * (e - 1.96 * se)});
        f.push_back({"ci_high", rn * (e + 1.96 * se)});
        rep.per_n.push_back(f);
        ns.push_back(n);
        err.push_back(std::abs(e));
        lo.push_back(rn * (e - 1.96 * se));
        hi.push_back(rn * (e + 1.96 * se));
    }
    if (is_full_support(plan.spec.event)) {
        bool zero = std::all_of(err.begin(), err.end(), [](double v) { return v == 0.0; });
        rep.checks.push_back({"bias.zero", zero, "B_hat identically zero"});
        return rep;
    }
    if (ns.size() >= 2) {
        std::size_t a = ns.size() - 2, b = ns.size() - 1;
        bool overlap = lo[a] <= hi[b] && lo[b] <= hi[a];
        rep.checks.push_back({"bias.ci_overlap", overlap,
                              "n=" + format_double(ns[a]) + " [" + format_double(lo[a]) + ", " +
                                  format_double(hi[a]) + "] vs n=" + format_double(ns[b]) + " [" +
                                  format_double(lo[b]) + ", " + format_double(hi[b]) + "]"});
        double slope = loglog_slope(ns, err);
        rep.summary.push_back({"error_slope", slope});
        rep.checks.push_back({"bias.error_slope", slope >= -0.8 && slope <= -0.2,
                              "log-log slope of |mean error| = " + format_double(slope)});
    }
    return rep;
}

// ---------------------------------------------------------------- CLT

inline ExperimentReport run_clt(const ExperimentPlan& plan) {
    plan.validate();
    if (plan.spec.event.d != 2)
        throw DomainError("run_clt: the Hoeffding prediction is implemented for dyadic moments");
    ExperimentReport rep;
    rep.experiment = "clt";
    rep.seed = plan.seed;
    auto lim = limit_value(plan, 5);
    if (!lim.unique)
        throw RefusedModel("run_clt: multiple aggregate fixed points detected; refusing");
    rep.summary.push_back({"m0", lim.value});
    std::vector<double> skews;
    for (int n : plan.n_grid) {
        auto b = run_replications(plan, n, true);
        add_replication_rows(rep, b, plan.spec.instrument.q);
        auto m = b.component(0);
        double mbar = mean(m);
        std::vector<double> z;
        for (double v : m) z.push_back(std::sqrt(static_cast<double>(n)) * (v - mbar));
        auto sm = summarize(z);
        auto om = omnibus_normality(z);
        std::vector<double> pred;
        double vn = 0.0;
        for (std::size_t r = 0; r < b.rows.size(); ++r)
            if (b.converged[r]) {
                auto h = hoeffding_variance(b.rows[r], mbar);
                pred.push_back(h.var_mean);
                vn += h.v_n;
            }
        double ens = variance(m), hp = mean(pred);
        auto f = accounting(b, plan.reps);
        f.push_back({"mean", mbar});
        f.push_back({"skewness", sm.skewness});
        f.push_back({"excess_kurtosis", sm.excess_kurtosis});
        f.push_back({"omnibus", om.statistic});
        f.push_back({"p_value", om.p_value});
        f.push_back({"ensemble_variance", ens});
        f.push_back({"hoeffding_variance", hp});
        f.push_back({"variance_ratio", ens / hp});
        f.push_back({"V_n", vn / pred.size()});
        rep.per_n.push_back(f);
        skews.push_back(std::abs(sm.skewness));
        if (n == plan.n_grid.back()) {
            rep.checks.push_back({"clt.normality", om.p_value > 0.05,
                                  "n=" + std::to_string(n) + " K2=" + format_double(om.statistic) +
                                      " p=" + format_double(om.p_value)});
            rep.checks.push_back({"clt.hoeffding_variance", std::abs(ens / hp - 1.0) <= 0.15,
                                  "ensemble/predicted = " + format_double(ens / hp)});
        }
    }
    if (skews.size() >= 2)
        rep.checks.push_back({"clt.skewness_shrinks", skews.back() < skews.front(),
                              "|skew| " + format_double(skews.front()) + " -> " +
                                  format_double(skews.back())});
    return rep;
}

// ---------------------------------------------------------------- logit rate

struct LogitRateOptions {
    std::vector<int> r_values{0, 1, 2};
    int payoff_draws = 20;
};

// r! prod exp{U_q} / (1 + I)^{r+1}
inline double logit_formula(const std::vector<double>& accepted_u, double inclusive) {
    double v = factorial(static_cast<int>(accepted_u.size()));
    for (double u : accepted_u) v *= std::exp(u);
    return v / std::pow(1.0 + inclusive, static_cast<double>(accepted_u.size()) + 1.0);
}

struct LogitDraw {
    std::vector<double> u;  // systematic payoffs of the proposers
    double inclusive = 0.0;
};

// J = round(sqrt n) proposers with U* ~ U[-1, 1]; I = n^{-1/2} sum exp{U*}.
inline LogitDraw logit_payoff_draw(int n, std::uint64_t seed, int draw) {
    auto sc = scaling(n, ShockDistribution());
    Rng rng = make_rng("logit_payoffs", seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(draw)});
    LogitDraw d;
    d.u.resize(sc.j_n);
    for (auto& u : d.u) {
        u = 2.0 * uniform01(rng) - 1.0;
        d.inclusive += std::exp(u);
    }
    d.inclusive /= std::sqrt(static_cast<double>(n));
    return d;
}

// n^{r/2} Phi: acceptance of the first r proposers and rejection of the rest,
// averaged analytically over the taste shocks given MC. MC levels are stratified
// over the budget with jitter shared across n.
inline EventProbability logit_acceptance(const LogitDraw& d, int r, int n,
                                         const ShockDistribution& shock, int budget,
                                         std::uint64_t seed, int draw) {
    auto sc = scaling(n, shock);
    Rng rng = make_rng("logit_mc", seed, {static_cast<std::uint64_t>(draw)});
    double scale = std::pow(static_cast<double>(n), 0.5 * r);
    double sum = 0.0, sum2 = 0.0;
    for (int b = 0; b < budget; ++b) {
        double mc = marginal_cost_at(sc, shock, (b + uniform01(rng)) / budget);
        double v = scale;
        for (std::size_t q = 0; q < d.u.size(); ++q) {
            double z = (mc - d.u[q]) / sc.sigma_n;
            v *= static_cast<int>(q) < r ? shock.survival(z) : shock.cdf(z);
        }
        sum += v;
        sum2 += v * v;
    }
    EventProbability e;
    e.value = sum / budget;
    e.se = std::sqrt(std::max(0.0, (sum2 - budget * e.value * e.value) / (budget - 1.0)) / budget);
    return e;
}

inline ExperimentReport run_logit_rate(const ExperimentPlan& plan, LogitRateOptions opt = {}) {
    plan.validate();
    ExperimentReport rep;
    rep.experiment = "logit-rate";
    rep.seed = plan.seed;
    rep.columns = {"r", "n", "draw", "scaled_prob", "se", "formula", "scaled_gap"};
    const auto& shock = plan.model.shock;
    for (int r : opt.r_values) {
        std::vector<double> med;
        for (int n : plan.n_grid) {
            std::vector<std::vector<double>> rows(opt.payoff_draws);
            parallel_for(opt.payoff_draws, plan.threads, [&](std::size_t k) {
                auto d = logit_payoff_draw(n, plan.seed, static_cast<int>(k));
                if (r > static_cast<int>(d.u.size())) throw DomainError("logit rate: r exceeds J");
                auto est = logit_acceptance(d, r, n, shock, plan.mc_budget, plan.seed, static_cast<int>(k));
                std::vector<double> acc(d.u.begin(), d.u.begin() + r);
                double f = logit_formula(acc, d.inclusive);
                double gap = std::sqrt(static_cast<double>(n)) * std::abs(est.value - f);
                rows[k] = {static_cast<double>(r), static_cast<double>(n), static_cast<double>(k),
                           est.value, est.se, f, gap};
            });
            std::vector<double> gaps;
            for (auto& row : rows) {
                gaps.push_back(row[6]);
                rep.rows.push_back(row);
            }
            med.push_back(median(gaps));
            rep.per_n.push_back({{"r", static_cast<double>(r)},
                                 {"n", static_cast<double>(n)},
                                 {"median_scaled_gap", median(gaps)}});
        }
        bool dec = true;
        for (std::size_t k = 1; k < med.size(); ++k) dec = dec && med[k] < med[k - 1];
        std::string d;
        for (double v : med) d += (d.empty() ? "" : ", ") + format_double(v);
        rep.checks.push_back({"logit.r" + std::to_string(r) + "_decreasing", dec,
                              "median sqrt(n)|gap| over n: " + d});
    }
    return rep;
}

// ---------------------------------------------------------------- sampling gap

// (hits, tuples) of the event among D-tuples with type multiset `cell`.
inline std::pair<double, double> event_counts(const UndirectedNetwork& L, const std::vector<int>& X,
                                              const SubnetworkEvent& ev, std::vector<int> cell,
                                              int num_types) {
    std::sort(cell.begin(), cell.end());
    Instrument ins;
    ins.h = [cell](const std::vector<int>& xs) {
        auto s = xs;
        std::sort(s.begin(), s.end());
        return std::vector<double>{s == cell ? 1.0 : 0.0};
    };
    auto fe = [&](const std::vector<int>& xs, std::uint32_t pat) {
        return symmetrized_contribution(ev, ins, xs, pat);
    };
    auto all = SubnetworkEvent::full_support(ev.d);
    auto fa = [&](const std::vector<int>& xs, std::uint32_t pat) {
        return symmetrized_contribution(all, ins, xs, pat);
    };
    return {tuple_sum(L, X, ev.d, num_types, 1, fe)[0], tuple_sum(L, X, ev.d, num_types, 1, fa)[0]};
}

inline std::vector<PayoffModel> default_gap_panel() {
    StatisticSpec st3;
    st3.cap = 3;
    StatisticSpec st4;
    st4.cap = 4;
    LinearIndex strat1;
    strat1.c0 = -0.5;
    strat1.s2 = 0.3;
    LinearIndex strat2;
    strat2.c0 = -0.2;
    strat2.s = -0.2;
    strat2.s2 = -0.2;
    return {PayoffModel::constant(-0.5, 4), PayoffModel::constant(0.0, 4),
            PayoffModel::constant(0.5, 4), PayoffModel::linear(TypeSpace{}, st3, strat1),
            PayoffModel::linear(TypeSpace{}, st4, strat2)};
}

struct SamplingGapOptions {
    std::vector<SubnetworkEvent> events{SubnetworkEvent::single_link(), SubnetworkEvent::two_link()};
    std::vector<std::string> event_names{"single_link", "two_link"};
};

inline ExperimentReport run_sampling_gap(const std::vector<PayoffModel>& panel,
                                         const ExperimentPlan& plan, SamplingGapOptions opt = {}) {
    plan.validate();
    if (panel.empty()) throw DomainError("sampling gap: empty model panel");
    ExperimentReport rep;
    rep.experiment = "sampling-gap";
    rep.seed = plan.seed;
    rep.columns = {"model", "event", "n", "pi_hat", "pi_hat_se", "pi_rep", "pi_rep_se",
                   "scaled_gap", "scaled_gap_se"};
    const std::size_t E = opt.events.size();
    // gap[e][k][model], se[e][k][model]
    std::vector<std::vector<std::vector<double>>> gap(E), gse(E);
    for (std::size_t e = 0; e < E; ++e) {
        gap[e].assign(plan.n_grid.size(), {});
        gse[e].assign(plan.n_grid.size(), {});
    }
    for (std::size_t mi = 0; mi < panel.size(); ++mi) {
        const auto& model = panel[mi];
        require_degree_model(model);
        const int K = model.types.size(), S = model.node_stat.support_size();
        for (std::size_t k = 0; k < plan.n_grid.size(); ++k) {
            const int n = plan.n_grid[k];
            std::uint64_t seed = derive_seed("sampling_gap", plan.seed, {mi});
            std::vector<std::vector<std::pair<double, double>>> counts(
                plan.reps, std::vector<std::pair<double, double>>(E, {0.0, 0.0}));
            std::vector<ReferenceDistribution> mh(plan.reps);
            std::vector<char> ok(plan.reps, 0);
            parallel_for(plan.reps, plan.threads, [&](std::size_t r) {
                auto sim = simulate_network(model, n, seed, r, plan.tatonnement);
                if (!sim.converged) return;
                ok[r] = 1;
                for (std::size_t e = 0; e < E; ++e)
                    counts[r][e] = event_counts(sim.L, sim.X, opt.events[e],
                                                std::vector<int>(opt.events[e].d, 0), K);
                mh[r] = empirical_reference_distribution(sim.L, pre_network(sim.shocks), sim.X, model);
            });
            AggregateState st;
            st.m = ReferenceDistribution(K, S);
            double used = 0.0;
            for (std::size_t r = 0; r < mh.size(); ++r)
                if (ok[r]) {
                    used += 1.0;
                    for (int R = 0; R < 2; ++R)
                        for (std::size_t c = 0; c < st.m.tables[R].size(); ++c)
                            st.m.tables[R][c] += mh[r].tables[R][c];
                }
            if (used == 0.0) throw ExperimentAborted("sampling gap: no replication converged");
            for (int R = 0; R < 2; ++R)
                for (auto& v : st.m.tables[R]) v /= used;
            for (std::size_t e = 0; e < E; ++e) {
                double hits = 0.0, tot = 0.0;
                std::vector<double> f;
                for (std::size_t r = 0; r < counts.size(); ++r)
                    if (ok[r] && counts[r][e].second > 0) {
                        hits += counts[r][e].first;
                        tot += counts[r][e].second;
                        f.push_back(counts[r][e].first / counts[r][e].second);
                    }
                double pi_hat = hits / tot;
                double pi_hat_se = std::sqrt(variance(f) / f.size());
                MomentSpec sp;
                sp.event = opt.events[e];
                auto pr = simulate_event_prob(st, sp, std::vector<int>(opt.events[e].d, 0), model, n,
                                              plan.mc_budget, derive_seed("representation", seed, {static_cast<std::uint64_t>(n), e}));
                double g = n * std::abs(pi_hat - pr.value);
                double gs = n * std::sqrt(pi_hat_se * pi_hat_se + pr.se * pr.se);
                gap[e][k].push_back(g);
                gse[e][k].push_back(gs);
                rep.rows.push_back({static_cast<double>(mi), static_cast<double>(e),
                                    static_cast<double>(n), pi_hat, pi_hat_se, pr.value, pr.se, g, gs});
            }
        }
    }
    for (std::size_t e = 0; e < E; ++e) {
        std::vector<double> med, mse;
        for (std::size_t k = 0; k < plan.n_grid.size(); ++k) {
            med.push_back(median(gap[e][k]));
            mse.push_back(median(gse[e][k]));
            rep.per_n.push_back({{"event", static_cast<double>(e)},
                                 {"n", static_cast<double>(plan.n_grid[k])},
                                 {"median_scaled_gap", med.back()},
                                 {"median_scaled_gap_se", mse.back()}});
        }
        bool within = true, strict = true;
        for (std::size_t k = 1; k < med.size(); ++k) {
            within = within && med[k] <= med[k - 1] + 2.0 * std::max(mse[k], mse[k - 1]);
            strict = strict && med[k] <= med[k - 1];
        }
        std::string d;
        for (std::size_t k = 0; k < med.size(); ++k)
            d += (d.empty() ? "" : ", ") + format_double(med[k]) + " (se " + format_double(mse[k]) + ")";
        rep.summary.push_back({opt.event_names[e] + "_strictly_nonincreasing", strict ? 1.0 : 0.0});
        rep.checks.push_back({"sampling_gap." + opt.event_names[e], within,
                              "median n|gap| over n: " + d});
    }
    return rep;
}

// ---------------------------------------------------------------- invariance / independence

inline int encode_value_set(const std::set<double>& vals, const StatisticSpec& spec) {
    int code = 0;
    for (double v : vals) code |= 1 << spec.index_of(v);
    return code;
}

// Potential values of node j and of node tau(j) = k (swap of j and k) with the
// same pinned proposals of node 0, compared on independent shock draws by a
// chi-square homogeneity test; cells range over pin patterns with equal relevant
// overlap and over attribute vectors with x_j = x_k.
inline ExperimentReport run_invariance(const ExperimentPlan& plan) {
    require_degree_model(plan.model);
    ExperimentReport rep;
    rep.experiment = "invariance";
    rep.seed = plan.seed;
    const int n = 4;
    const auto& m = plan.model;
    rep.columns = {"cell", "p_value", "statistic", "df"};
    std::vector<std::vector<int>> pins;  // bits for (0,1), (1,0), (0,2), (2,0)
    for (int b = 0; b < 16; ++b) {
        int b01 = b & 1, b10 = (b >> 1) & 1, b02 = (b >> 2) & 1, b20 = (b >> 3) & 1;
        if ((b01 & b10) == (b02 & b20)) pins.push_back({b01, b10, b02, b20});
    }
    std::vector<std::vector<int>> xs;
    int K = m.types.size();
    for (int x0 = 0; x0 < std::min(K, 2); ++x0) xs.push_back({x0, K - 1, K - 1, 0});
    if (xs.size() < 2) xs.push_back({0, 0, 0, 0});
    struct Cell {
        std::vector<int> pin, x;
    };
    std::vector<Cell> cells;
    for (const auto& x : xs)
        for (const auto& p : pins) cells.push_back({p, x});
    std::vector<ChiSquareResult> res(cells.size());
    const int S = m.node_stat.support_size();
    parallel_for(cells.size(), plan.threads, [&](std::size_t c) {
        const auto& cell = cells[c];
        PotentialValueQuery q;
        q.e1 = {{0, 1}, {1, 0}, {0, 2}, {2, 0}};
        q.d_e1 = cell.pin;
        std::vector<std::vector<double>> table(2, std::vector<double>(1 << S, 0.0));
        for (int side = 0; side < 2; ++side) {
            q.target = side == 0 ? 1 : 2;
            for (int d = 0; d < plan.reps; ++d) {
                auto s = draw_shocks(m, n, derive_seed("invariance", plan.seed,
                                                       {c, static_cast<std::uint64_t>(side),
                                                        static_cast<std::uint64_t>(d)}));
                auto vals = potential_values(q, m, s, cell.x);
                table[side][encode_value_set(vals, m.node_stat)] += 1.0;
            }
        }
        res[c] = chi_square_homogeneity(table);
    });
    int fails = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        fails += res[c].p_value <= 0.05;
        rep.rows.push_back({static_cast<double>(c), res[c].p_value, res[c].statistic, res[c].df});
    }
    rep.summary.push_back({"cells", static_cast<double>(cells.size())});
    rep.summary.push_back({"failures", static_cast<double>(fails)});
    int allowed = static_cast<int>(cells.size()) / 20;
    rep.checks.push_back({"invariance.chi_square", fails <= std::max(1, allowed),
                          std::to_string(fails) + " of " + std::to_string(cells.size()) +
                              " cells rejected at 5%"});

    // Independence: polyad (0,1) at n = 5 with all proposals out of the polyad
    // pinned. A_D depends on node 0's own shocks, A_s on the potential value of node 2.
    const int n5 = 5;
    PotentialValueQuery q5;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < n5; ++j)
            if (j != i) {
                q5.e1.push_back({i, j});
                q5.d_e1.push_back(1);
            }
    q5.target = 2;
    std::vector<int> x5(n5, 0);
    const int draws = plan.mc_budget;
    std::vector<char> ad(draws), as(draws);
    const auto& sup = m.s_support();
    parallel_for(draws, plan.threads, [&](std::size_t d) {
        auto s = draw_shocks(m, n5, derive_seed("independence", plan.seed, {d}));
        double u = m.u(x5[0], x5[1], sup[std::min(1, S - 1)], sup[std::min(1, S - 1)]);
        ad[d] = accepts(u, s.sigma, s.eps(0, 1), s.mc[0]);
        auto vals = potential_values(q5, m, s, x5, {5});
        as[d] = !vals.empty() && *vals.begin() >= 1.0;
    });
    double pa = 0, ps = 0, pj = 0;
    for (int d = 0; d < draws; ++d) {
        pa += ad[d];
        ps += as[d];
        pj += ad[d] && as[d];
    }
    pa /= draws;
    ps /= draws;
    pj /= draws;
    // delta-method s.e. of p_joint - p_a p_s from per-draw influence values
    std::vector<double> infl(draws);
    for (int d = 0; d < draws; ++d)
        infl[d] = (ad[d] && as[d]) - ps * ad[d] - pa * as[d];
    double se = std::sqrt(variance(infl) / draws);
    double diff = pj - pa * ps;
    rep.summary.push_back({"p_A_D", pa});
    rep.summary.push_back({"p_A_s", ps});
    rep.summary.push_back({"p_joint", pj});
    rep.summary.push_back({"factorization_gap", diff});
    rep.summary.push_back({"factorization_se", se});
    rep.checks.push_back({"independence.factorization", std::abs(diff) <= 3.0 * se,
                          "p_joint - p_D p_s = " + format_double(diff) + " (se " + format_double(se) + ")"});
    return rep;
}

// ---------------------------------------------------------------- oracle

struct OracleReport {
    int n = 0;
    int draws = 0;
    int agreement = 0;  // draws where enumeration and the proposal check agree
    int converged = 0;  // tatonnement runs that reached a stable network
    int contained = 0;  // converged outputs inside the enumerated set
    std::size_t stable_networks = 0;
};

// Enumerated PSN set against an independent check through proposal networks
// (L stable iff L = D(L) ⊙ D(L)ᵀ), and tatonnement containment.
inline OracleReport run_oracle(const PayoffModel& m, int n, int draws, std::uint64_t seed,
                               int threads = 0, EnumerationOptions eo = {}) {
    if (n < 2) throw DomainError("oracle: n must be at least 2");
    if (draws < 1) throw DomainError("oracle: draws must be positive");
    OracleReport rep;
    rep.n = n;
    rep.draws = draws;
    std::vector<int> agree(draws), conv(draws), cont(draws);
    std::vector<std::size_t> count(draws);
    parallel_for(draws, threads, [&](std::size_t d) {
        Rng xr = make_rng("oracle_types", seed, {static_cast<std::uint64_t>(n), d});
        std::vector<int> X(n);
        for (auto& x : X) x = m.types.sample(xr);
        auto s = draw_shocks(m, n, derive_seed("oracle_shocks", seed, {static_cast<std::uint64_t>(n), d}));
        auto psn = enumerate_psn(m, s, X, eo);
        std::vector<UndirectedNetwork> alt;
        int pairs = n * (n - 1) / 2;
        for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask) {
            auto L = network_from_mask(n, mask);
            if (stable_from_proposals(proposals_at(L, m, s, X)) == L) alt.push_back(std::move(L));
        }
        agree[d] = alt == psn;
        count[d] = psn.size();
        Rng tr = make_rng("oracle_tatonnement", seed, {static_cast<std::uint64_t>(n), d});
        auto res = tatonnement(m, s, X, tr);
        if (auto* L = std::get_if<UndirectedNetwork>(&res)) {
            conv[d] = 1;
            cont[d] = std::find(psn.begin(), psn.end(), *L) != psn.end();
        }
    });
    for (int d = 0; d < draws; ++d) {
        rep.agreement += agree[d];
        rep.converged += conv[d];
        rep.contained += cont[d];
        rep.stable_networks += count[d];
    }
    return rep;
}

}  // namespace psnlab
