#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psnlab/rng.hpp"

namespace psnlab {

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

enum class ShockFamily { gumbel, exponential };

inline std::string to_string(ShockFamily f) {
    return f == ShockFamily::gumbel ? "gumbel" : "exponential";
}

inline ShockFamily shock_family_from(const std::string& s) {
    if (s == "gumbel") return ShockFamily::gumbel;
    if (s == "exponential") return ShockFamily::exponential;
    throw DomainError("unknown shock family: " + s);
}

// Standard gumbel (type I extreme value) or standard exponential taste shocks.
class ShockDistribution {
public:
    explicit ShockDistribution(ShockFamily f = ShockFamily::gumbel) : family_(f) {}

    ShockFamily family() const { return family_; }

    double cdf(double s) const {
        if (family_ == ShockFamily::gumbel) return std::exp(-std::exp(-s));
        return s <= 0.0 ? 0.0 : -std::expm1(-s);
    }
    // 1 - G(s), accurate in the upper tail.
    double survival(double s) const {
        if (family_ == ShockFamily::gumbel) return -std::expm1(-std::exp(-s));
        return s <= 0.0 ? 1.0 : std::exp(-s);
    }
    double pdf(double s) const {
        if (family_ == ShockFamily::gumbel) return std::exp(-s - std::exp(-s));
        return s < 0.0 ? 0.0 : std::exp(-s);
    }
    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p outside (0,1)");
        if (family_ == ShockFamily::gumbel) return -std::log(-std::log(p));
        return -std::log1p(-p);
    }
    // G^{-1}(1 - q), accurate for small q.
    double upper_quantile(double q) const {
        if (!(q > 0.0 && q <= 1.0)) throw DomainError("upper_quantile: q outside (0,1]");
        if (family_ == ShockFamily::gumbel) return -std::log(-std::log1p(-q));
        return -std::log(q);
    }
    // a(s) = (1 - G(s)) / g(s)
    double aux(double s) const {
        if (family_ == ShockFamily::exponential) return 1.0;
        double e = std::exp(-s);
        return -std::expm1(-e) / (std::exp(-e) * e);
    }
    double sample(Rng& rng) const {
        double u = uniform01(rng);
        if (family_ == ShockFamily::gumbel) return -std::log(-std::log(u));
        return -std::log(u);
    }
    // Draw from G conditional on exceeding tau.
    double sample_above(double tau, Rng& rng) const {
        double q = survival(tau);
        if (q >= 1.0) return sample(rng);
        double s = upper_quantile(q * uniform01(rng));
        return std::max(s, tau);
    }

private:
    ShockFamily family_;
};

struct ScalingSequence {
    int n = 0;
    int j_n = 1;
    double b_n = 0.0;
    double sigma_n = 1.0;
};

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline ScalingSequence scaling(int n, const ShockDistribution& shock) {
    if (n < 2) throw DomainError("scaling: n must be at least 2");
    ScalingSequence sc;
    sc.n = n;
    double rn = std::sqrt(static_cast<double>(n));
    sc.j_n = std::max(1, round_half_up(rn));
    sc.b_n = shock.upper_quantile(1.0 / rn);
    sc.sigma_n = 1.0 / shock.aux(sc.b_n);
    return sc;
}

// sigma * max of J shock draws at CDF level u of G^J.
inline double marginal_cost_at(const ScalingSequence& sc, const ShockDistribution& shock, double u) {
    double J = static_cast<double>(sc.j_n);
    double m;
    if (shock.family() == ShockFamily::gumbel) {
        m = std::log(J) - std::log(-std::log(u));
    } else {
        // u^{1/J} close to 1: 1 - u^{1/J} = -expm1(log(u)/J)
        m = -std::log(-std::expm1(std::log(u) / J));
    }
    return sc.sigma_n * m;
}

inline double draw_marginal_cost(const ScalingSequence& sc, const ShockDistribution& shock,
                                 Rng& rng) {
    return marginal_cost_at(sc, shock, uniform01(rng));
}

// CDF of the marginal cost: G(m / sigma)^J
inline double marginal_cost_cdf(const ScalingSequence& sc, const ShockDistribution& shock,
                                double m) {
    double g = shock.cdf(m / sc.sigma_n);
    return std::pow(g, sc.j_n);
}

struct TypeSpace {
    std::vector<double> values{0.0};
    std::vector<double> weights{1.0};

    int size() const { return static_cast<int>(values.size()); }

    void validate() const {
        if (values.empty() || values.size() != weights.size())
            throw DomainError("type space: values and weights must be non-empty and aligned");
        double sum = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw DomainError("type space: negative weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw DomainError("type space: weights must sum to 1");
        auto v = values;
        std::sort(v.begin(), v.end());
        if (std::adjacent_find(v.begin(), v.end()) != v.end())
            throw DomainError("type space: values must be distinct");
    }

    int sample(Rng& rng) const {
        double u = uniform01(rng), acc = 0.0;
        for (int k = 0; k < size(); ++k) {
            acc += weights[k];
            if (u < acc) return k;
        }
        return size() - 1;
    }
};

enum class StatKind { degree, composition_share, transitive_count, transitive_indicator };

inline std::string to_string(StatKind k) {
    switch (k) {
        case StatKind::degree: return "degree";
        case StatKind::composition_share: return "composition_share";
        case StatKind::transitive_count: return "transitive_count";
        case StatKind::transitive_indicator: return "transitive_indicator";
    }
    return "degree";
}

inline StatKind stat_kind_from(const std::string& s) {
    if (s == "degree") return StatKind::degree;
    if (s == "composition_share") return StatKind::composition_share;
    if (s == "transitive_count") return StatKind::transitive_count;
    if (s == "transitive_indicator") return StatKind::transitive_indicator;
    throw DomainError("unknown statistic kind: " + s);
}

inline bool is_edge_kind(StatKind k) {
    return k == StatKind::transitive_count || k == StatKind::transitive_indicator;
}

// A network statistic with a finite support. Raw values are clamped at the cap;
// composition shares are rounded to the grid {0, 1/cap, ..., 1}.
struct StatisticSpec {
    StatKind kind = StatKind::degree;
    int cap = 8;
    int radius = 1;
    int flag_type = 0;  // type index counted by composition_share

    void validate() const {
        if (cap < 0) throw DomainError("statistic: cap must be non-negative");
        if (radius < 1) throw DomainError("statistic: radius must be at least 1");
        if ((kind == StatKind::degree || kind == StatKind::composition_share) && radius != 1)
            throw DomainError("statistic: degree and composition_share have radius 1");
        if (kind == StatKind::composition_share && cap < 1)
            throw DomainError("statistic: composition_share needs cap >= 1");
    }

    std::vector<double> support() const {
        std::vector<double> s;
        switch (kind) {
            case StatKind::degree:
            case StatKind::transitive_count:
                for (int k = 0; k <= cap; ++k) s.push_back(k);
                break;
            case StatKind::composition_share:
                for (int k = 0; k <= cap; ++k) s.push_back(static_cast<double>(k) / cap);
                break;
            case StatKind::transitive_indicator:
                s = {0.0, 1.0};
                break;
        }
        return s;
    }

    int support_size() const { return kind == StatKind::transitive_indicator ? 2 : cap + 1; }

    // Index of a support value; -1 if outside the support.
    int index_of(double v) const {
        switch (kind) {
            case StatKind::degree:
            case StatKind::transitive_count:
            case StatKind::transitive_indicator: {
                double r = std::round(v);
                if (std::abs(v - r) > 1e-9 || r < 0 || r >= support_size()) return -1;
                return static_cast<int>(r);
            }
            case StatKind::composition_share: {
                double r = std::round(v * cap);
                if (std::abs(v * cap - r) > 1e-9 || r < 0 || r > cap) return -1;
                return static_cast<int>(r);
            }
        }
        return -1;
    }

    double clamp_count(int raw) const {
        if (kind == StatKind::transitive_indicator) return raw > 0 ? 1.0 : 0.0;
        return static_cast<double>(std::min(raw, cap));
    }

    double share(int flagged, int degree) const {
        if (degree == 0) return 0.0;
        return std::round(static_cast<double>(flagged) / degree * cap) / cap;
    }
};

using PayoffFn = std::function<double(int xi, int xj, double s, double s2, double t)>;

// Built-in linear index U* = th0 + th_x x + th_x2 x' + th_xx x x' + th_s s + th_s2 s' + th_t t.
struct LinearIndex {
    double c0 = 0, x = 0, x2 = 0, xx = 0, s = 0, s2 = 0, t = 0;
    std::vector<double> as_vector() const { return {c0, x, x2, xx, s, s2, t}; }
    static LinearIndex from_vector(const std::vector<double>& v) {
        if (v.size() != 7) throw DomainError("linear payoff: theta needs 7 entries");
        return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
    }
};

class PayoffModel {
public:
    TypeSpace types;
    StatisticSpec node_stat;
    std::optional<StatisticSpec> edge_stat;
    ShockDistribution shock;
    double t0 = 0.0;
    std::string form = "linear";
    std::vector<double> theta;

    PayoffModel() = default;

    static PayoffModel linear(TypeSpace ts, StatisticSpec st, LinearIndex li,
                              ShockFamily fam = ShockFamily::gumbel,
                              std::optional<StatisticSpec> est = std::nullopt) {
        PayoffModel m;
        m.types = std::move(ts);
        m.node_stat = st;
        m.edge_stat = est;
        m.shock = ShockDistribution(fam);
        m.form = "linear";
        m.theta = li.as_vector();
        m.rebuild();
        return m;
    }

    // Table over (x, x', s-index, s'-index) in row-major order, plus th_t * t.
    static PayoffModel table(TypeSpace ts, StatisticSpec st, std::vector<double> values,
                             double theta_t = 0.0, ShockFamily fam = ShockFamily::gumbel,
                             std::optional<StatisticSpec> est = std::nullopt) {
        PayoffModel m;
        m.types = std::move(ts);
        m.node_stat = st;
        m.edge_stat = est;
        m.shock = ShockDistribution(fam);
        m.form = "table";
        m.theta = std::move(values);
        m.theta.push_back(theta_t);
        m.rebuild();
        return m;
    }

    static PayoffModel custom(TypeSpace ts, StatisticSpec st, PayoffFn fn,
                              ShockFamily fam = ShockFamily::gumbel,
                              std::optional<StatisticSpec> est = std::nullopt) {
        PayoffModel m;
        m.types = std::move(ts);
        m.node_stat = st;
        m.edge_stat = est;
        m.shock = ShockDistribution(fam);
        m.form = "custom";
        m.fn_ = std::move(fn);
        m.rebuild();
        return m;
    }

    // U_ij = s_j - 1 on a single type with degree statistic.
    static PayoffModel example_degree_complement(int cap = 8,
                                                 ShockFamily fam = ShockFamily::gumbel) {
        StatisticSpec st;
        st.cap = cap;
        LinearIndex li;
        li.c0 = -1.0;
        li.s2 = 1.0;
        return linear(TypeSpace{}, st, li, fam);
    }

    static PayoffModel constant(double c, int cap = 8, ShockFamily fam = ShockFamily::gumbel) {
        StatisticSpec st;
        st.cap = cap;
        LinearIndex li;
        li.c0 = c;
        return linear(TypeSpace{}, st, li, fam);
    }

    void set_theta(std::vector<double> th) {
        theta = std::move(th);
        rebuild();
    }

    // Recompute the evaluator and u_bar; call after editing any public field.
    void rebuild() {
        types.validate();
        node_stat.validate();
        if (edge_stat) {
            edge_stat->validate();
            if (!is_edge_kind(edge_stat->kind)) throw DomainError("edge statistic must be transitive");
        }
        if (is_edge_kind(node_stat.kind)) throw DomainError("node statistic must be node-level");
        if (form == "linear") {
            auto li = LinearIndex::from_vector(theta);
            auto vals = types.values;
            fn_ = [li, vals](int xi, int xj, double s, double s2, double t) {
                double a = vals[xi], b = vals[xj];
                return li.c0 + li.x * a + li.x2 * b + li.xx * a * b + li.s * s + li.s2 * s2 +
                       li.t * t;
            };
        } else if (form == "table") {
            std::size_t K = types.values.size(), S = node_stat.support_size();
            if (theta.size() != K * K * S * S + 1)
                throw DomainError("table payoff: expected |X|^2 |S|^2 + 1 entries");
            auto tab = theta;
            auto st = node_stat;
            fn_ = [tab, st, K, S](int xi, int xj, double s, double s2, double t) {
                int a = st.index_of(s), b = st.index_of(s2);
                return tab[((static_cast<std::size_t>(xi) * K + xj) * S + a) * S + b] +
                       tab.back() * t;
            };
        } else if (form != "custom") {
            throw DomainError("unknown payoff form: " + form);
        }
        if (!fn_) throw DomainError("payoff model has no evaluator");
        if (edge_stat && edge_stat->index_of(t0) < 0) throw DomainError("t0 outside edge support");
        compute_u_bar();
    }

    // Unchecked evaluation on the hot path.
    double u(int xi, int xj, double s, double s2, double t) const { return fn_(xi, xj, s, s2, t); }
    double u(int xi, int xj, double s, double s2) const { return fn_(xi, xj, s, s2, t0); }

    double u_bar() const { return u_bar_; }

    const std::vector<double>& s_support() const { return s_support_; }
    std::vector<double> t_support() const {
        return edge_stat ? edge_stat->support() : std::vector<double>{t0};
    }

private:
    void compute_u_bar() {
        s_support_ = node_stat.support();
        double best = 0.0;
        bool first = true;
        for (int a = 0; a < types.size(); ++a)
            for (int b = 0; b < types.size(); ++b)
                for (double s : s_support_)
                    for (double s2 : s_support_) {
                        double v = std::abs(fn_(a, b, s, s2, t0));
                        if (first || v > best) best = v;
                        first = false;
                    }
        u_bar_ = best;
    }

    PayoffFn fn_;
    double u_bar_ = 0.0;
    std::vector<double> s_support_;
};

// Checked evaluation of the systematic payoff U*(x, x'; s, s', t).
inline double evaluate_payoff(const PayoffModel& m, int xi, int xj, double s, double s2,
                              std::optional<double> t = std::nullopt) {
    if (xi < 0 || xj < 0 || xi >= m.types.size() || xj >= m.types.size())
        throw DomainError("evaluate_payoff: attribute index outside the type space");
    if (m.node_stat.index_of(s) < 0 || m.node_stat.index_of(s2) < 0)
        throw DomainError("evaluate_payoff: statistic outside its support");
    double tv = t.value_or(m.t0);
    if (m.edge_stat) {
        if (m.edge_stat->index_of(tv) < 0)
            throw DomainError("evaluate_payoff: edge statistic outside its support");
    } else if (tv != m.t0) {
        throw DomainError("evaluate_payoff: model has no edge statistic");
    }
    return m.u(xi, xj, s, s2, tv);
}

}  // namespace psnlab
