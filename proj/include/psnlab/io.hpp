#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psnlab/aggstate.hpp"
#include "psnlab/experiments.hpp"
#include "psnlab/graph.hpp"
#include "psnlab/model.hpp"
#include "psnlab/moments.hpp"

namespace psnlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

// Flat key = value configuration. '#' starts a comment; blank lines are ignored.
//
//   psnlab_config_version = 1                    (required)
//   types.values          = 0, 1                 attribute points
//   types.weights         = 0.5, 0.5             sampling weights
//   stat.kind             = degree | composition_share | transitive_count | transitive_indicator
//   stat.cap              = 8
//   stat.flag_type        = 0                    type counted by composition_share
//   edge_stat.kind        = none | transitive_count | transitive_indicator
//   edge_stat.cap         = 2
//   t0                    = 0                    default edge statistic
//   payoff.form           = linear | table
//   payoff.theta          = c0, x, x', x x', s, s', t   (linear)
//                           |X|^2 |S|^2 table entries then the t coefficient (table)
//   shock.family          = gumbel | exponential
//   moment.event          = single_link | two_link | triangle | full_support | custom
//   moment.d              = 2                    polyad size for full_support and custom
//   moment.configurations = 1                    bit patterns for custom
//   moment.p_kappa        = 1
//   moment.p_rho          = 1
//   moment.p_fixed        = 0                    > 0 overrides kappa n^-rho
//   plan.n_grid           = 100, 400, 1600
//   plan.reps             = 200
//   plan.mc_budget        = 20000
struct Config {
    std::map<std::string, std::string> values;

    bool has(const std::string& k) const { return values.count(k) > 0; }
    std::string get(const std::string& k, const std::string& def) const {
        auto it = values.find(k);
        return it == values.end() ? def : it->second;
    }
};

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "psnlab_config_version", "types.values", "types.weights", "stat.kind", "stat.cap",
        "stat.flag_type", "edge_stat.kind", "edge_stat.cap", "t0", "payoff.form", "payoff.theta",
        "shock.family", "moment.event", "moment.d", "moment.configurations", "moment.p_kappa",
        "moment.p_rho", "moment.p_fixed", "plan.n_grid", "plan.reps", "plan.mc_budget"};
    return keys;
}

inline std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Config parse_config(std::istream& in) {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        const auto& keys = config_keys();
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + k + "'");
        if (c.values.count(k))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + k + "'");
        c.values[k] = v;
    }
    if (!c.has("psnlab_config_version")) throw ConfigError("config: missing psnlab_config_version");
    if (c.get("psnlab_config_version", "") != std::to_string(kConfigVersion))
        throw ConfigError("config: unsupported version " + c.get("psnlab_config_version", ""));
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse_config(f);
}

inline double parse_number(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (trim(s.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
}

inline int parse_int(const std::string& key, const std::string& s) {
    double v = parse_number(key, s);
    if (v != std::floor(v) || std::abs(v) > 2e9)
        throw ConfigError("config: '" + key + "' expects an integer, got '" + s + "'");
    return static_cast<int>(v);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(key, trim(item)));
    return out;
}

inline PayoffModel model_from_config(const Config& c) {
    try {
        TypeSpace ts;
        if (c.has("types.values")) ts.values = parse_list("types.values", c.get("types.values", ""));
        if (c.has("types.weights"))
            ts.weights = parse_list("types.weights", c.get("types.weights", ""));
        else
            ts.weights.assign(ts.values.size(), 1.0 / ts.values.size());
        ts.validate();
        StatisticSpec st;
        st.kind = stat_kind_from(c.get("stat.kind", "degree"));
        st.cap = parse_int("stat.cap", c.get("stat.cap", "8"));
        st.flag_type = parse_int("stat.flag_type", c.get("stat.flag_type", "0"));
        if (st.kind == StatKind::transitive_count || st.kind == StatKind::transitive_indicator)
            st.radius = 2;
        st.validate();
        std::optional<StatisticSpec> est;
        std::string ek = c.get("edge_stat.kind", "none");
        if (ek != "none") {
            StatisticSpec e;
            e.kind = stat_kind_from(ek);
            if (!is_edge_kind(e.kind)) throw ConfigError("config: edge_stat.kind must be an edge statistic");
            e.cap = parse_int("edge_stat.cap", c.get("edge_stat.cap", "2"));
            e.radius = 2;
            e.validate();
            est = e;
        }
        auto fam = shock_family_from(c.get("shock.family", "gumbel"));
        std::string form = c.get("payoff.form", "linear");
        auto theta = parse_list("payoff.theta", c.get("payoff.theta", "0,0,0,0,0,0,0"));
        PayoffModel m;
        if (form == "linear") {
            m = PayoffModel::linear(ts, st, LinearIndex::from_vector(theta), fam, est);
        } else if (form == "table") {
            if (theta.empty()) throw ConfigError("config: empty payoff table");
            double tt = theta.back();
            theta.pop_back();
            m = PayoffModel::table(ts, st, theta, tt, fam, est);
        } else {
            throw ConfigError("config: unknown payoff.form '" + form + "'");
        }
        m.t0 = parse_number("t0", c.get("t0", "0"));
        m.rebuild();
        return m;
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline MomentSpec moment_from_config(const Config& c) {
    MomentSpec sp;
    std::string ev = c.get("moment.event", "single_link");
    int d = parse_int("moment.d", c.get("moment.d", "2"));
    if (ev == "single_link") {
        sp.event = SubnetworkEvent::single_link();
    } else if (ev == "two_link") {
        sp.event = SubnetworkEvent::two_link();
    } else if (ev == "triangle") {
        sp.event = SubnetworkEvent::triangle();
    } else if (ev == "full_support") {
        sp.event = SubnetworkEvent::full_support(d);
    } else if (ev == "custom") {
        sp.event = SubnetworkEvent{d, {}, false};
        for (double v : parse_list("moment.configurations", c.get("moment.configurations", "")))
            sp.event.configurations.insert(static_cast<std::uint32_t>(v));
    } else {
        throw ConfigError("config: unknown moment.event '" + ev + "'");
    }
    try {
        sp.event.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    sp.kappa = parse_number("moment.p_kappa", c.get("moment.p_kappa", "1"));
    sp.rho = parse_number("moment.p_rho", c.get("moment.p_rho", std::to_string(sp.event.min_links())));
    sp.p_fixed = parse_number("moment.p_fixed", c.get("moment.p_fixed", "0"));
    if (!(sp.kappa > 0.0) || sp.p_fixed < 0.0) throw ConfigError("config: invalid normalization");
    return sp;
}

// Fills the plan fields present in the config; the rest keep their values.
inline void plan_from_config(const Config& c, ExperimentPlan& plan) {
    plan.model = model_from_config(c);
    plan.spec = moment_from_config(c);
    if (c.has("plan.n_grid")) {
        plan.n_grid.clear();
        for (double v : parse_list("plan.n_grid", c.get("plan.n_grid", "")))
            plan.n_grid.push_back(static_cast<int>(v));
    }
    if (c.has("plan.reps")) plan.reps = parse_int("plan.reps", c.get("plan.reps", ""));
    if (c.has("plan.mc_budget"))
        plan.mc_budget = parse_int("plan.mc_budget", c.get("plan.mc_budget", ""));
}

// ---------------------------------------------------------------- network files

// nodes.csv: "node,type" with the type index; edges.csv: "i,j" with i < j.
inline std::string nodes_csv(const std::vector<int>& X) {
    std::string out = "node,type\n";
    for (std::size_t i = 0; i < X.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(X[i]) + "\n";
    return out;
}

inline std::string edges_csv(const UndirectedNetwork& L) {
    std::string out = "i,j\n";
    for (int i = 0; i < L.n(); ++i)
        for (int j : L.neighbors(i))
            if (j > i) out += std::to_string(i) + "," + std::to_string(j) + "\n";
    return out;
}

inline std::vector<std::vector<long long>> read_int_csv(std::istream& in, const std::string& header,
                                                         const std::string& what) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != header)
        throw ConfigError(what + ": expected header '" + header + "'");
    std::vector<std::vector<long long>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<long long> row;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t pos = 0;
                long long v = std::stoll(trim(item), &pos);
                if (pos != trim(item).size()) throw std::invalid_argument("trailing");
                row.push_back(v);
            } catch (const std::exception&) {
                throw ConfigError(what + " line " + std::to_string(lineno) + ": expected integers");
            }
        }
        if (row.size() != 2) throw ConfigError(what + " line " + std::to_string(lineno) + ": expected 2 fields");
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<int> read_nodes(std::istream& in, int num_types) {
    auto rows = read_int_csv(in, "node,type", "nodes file");
    std::vector<int> X(rows.size(), -1);
    for (const auto& r : rows) {
        if (r[0] < 0 || r[0] >= static_cast<long long>(rows.size()) || X[r[0]] != -1)
            throw ConfigError("nodes file: node ids must be 0..n-1 without repeats");
        if (r[1] < 0 || r[1] >= num_types) throw ConfigError("nodes file: type index outside the type space");
        X[r[0]] = static_cast<int>(r[1]);
    }
    return X;
}

inline UndirectedNetwork read_edges(std::istream& in, int n) {
    UndirectedNetwork L(n);
    for (const auto& r : read_int_csv(in, "i,j", "edges file")) {
        if (r[0] < 0 || r[1] < 0 || r[0] >= n || r[1] >= n || r[0] == r[1])
            throw ConfigError("edges file: invalid pair");
        L.add_edge(static_cast<int>(r[0]), static_cast<int>(r[1]));
    }
    return L;
}

// ---------------------------------------------------------------- aggregate state

inline nlohmann::ordered_json state_json(const AggregateState& st, const PayoffModel& m) {
    nlohmann::ordered_json j;
    j["types"] = m.types.values;
    j["support"] = m.s_support();
    auto table = [&](auto at) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (int x = 0; x < st.m.k; ++x) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (int s = 0; s < st.m.s; ++s) row.push_back(at(x, s));
            rows.push_back(row);
        }
        return rows;
    };
    j["inclusive_value"] = table([&](int x, int s) { return st.eta.at(x, s); });
    j["reference_R0"] = table([&](int x, int s) { return st.m.at(x, s, 0); });
    j["reference_R1"] = table([&](int x, int s) { return st.m.at(x, s, 1); });
    return j;
}

inline nlohmann::ordered_json diagnostics_json(const FixedPointDiagnostics& d) {
    nlohmann::ordered_json j;
    j["converged"] = d.converged;
    j["iterations"] = d.iterations;
    j["final_residual"] = json_number(d.final_residual);
    j["residuals"] = d.residuals;
    j["contraction_ratios"] = d.contraction_ratios;
    return j;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write file: " + path);
    f << content;
}

}  // namespace psnlab
