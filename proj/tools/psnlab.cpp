#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "psnlab/aggstate.hpp"
#include "psnlab/experiments.hpp"
#include "psnlab/io.hpp"
#include "psnlab/moments.hpp"
#include "psnlab/psn.hpp"

namespace fs = std::filesystem;
using namespace psnlab;

namespace {

constexpr int kOk = 0;
constexpr int kThresholdFailure = 1;
constexpr int kUsageError = 2;

struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "model configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "base seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--threads", c.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
}

Config read_config_or_default(const std::string& path) {
    if (!path.empty()) return load_config(path);
    std::stringstream ss("psnlab_config_version = 1\n");
    return parse_config(ss);
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory: " + dir);
}

void emit(const std::string& dir, const std::string& name, const std::string& content) {
    if (dir.empty()) return;
    write_file((fs::path(dir) / name).string(), content);
}

int emit_report(const ExperimentReport& r, const std::string& dir) {
    auto j = to_json(r);
    ensure_dir(dir);
    emit(dir, "report.json", j.dump(2) + "\n");
    emit(dir, "report.csv", to_csv(r));
    nlohmann::ordered_json brief;
    brief["experiment"] = r.experiment;
    brief["passed"] = r.passed();
    brief["checks"] = j["checks"];
    std::cout << brief.dump(2) << "\n";
    return r.passed() ? kOk : kThresholdFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"psnlab: pairwise stable network simulation and verification"};
    app.require_subcommand(1);

    Common common;
    int n = 0, rep = 0, draws = 200, reps = 0, mc_budget = 0, extra_starts = 0, n_max = 6;
    std::vector<int> n_grid;
    double tol = 1e-8;
    std::string nodes_path, edges_path;

    auto* sim = app.add_subcommand("simulate", "simulate one pairwise stable network");
    add_common(sim, common);
    sim->add_option("--n", n, "number of nodes")->required();
    sim->add_option("--rep", rep, "replication index")->check(CLI::NonNegativeNumber);

    auto* oracle = app.add_subcommand("oracle", "enumeration cross-checks on small networks");
    add_common(oracle, common);
    oracle->add_option("--n", n, "number of nodes")->required();
    oracle->add_option("--draws", draws, "shock draws")->check(CLI::PositiveNumber);
    oracle->add_option("--n-max", n_max, "enumeration limit (at most 7)");

    auto* solve = app.add_subcommand("solve", "solve the aggregate-state fixed point");
    add_common(solve, common);
    solve->add_option("--tol", tol, "outer tolerance")->check(CLI::PositiveNumber);
    solve->add_option("--extra-starts", extra_starts, "random starts for the uniqueness check")
        ->check(CLI::NonNegativeNumber);

    auto* moment = app.add_subcommand("moment", "compute the network moment from files");
    add_common(moment, common);
    moment->add_option("--nodes", nodes_path, "nodes CSV (node,type)")->required()->check(CLI::ExistingFile);
    moment->add_option("--edges", edges_path, "edges CSV (i,j)")->required()->check(CLI::ExistingFile);

    std::vector<CLI::App*> experiments;
    for (const char* name : {"lln", "bias", "clt", "logit-rate", "sampling-gap"}) {
        auto* e = app.add_subcommand(name, std::string("run the ") + name + " experiment");
        add_common(e, common);
        e->add_option("--n", n_grid, "network sizes, comma separated")->delimiter(',');
        e->add_option("--reps", reps, "replications per n");
        e->add_option("--mc-budget", mc_budget, "Monte Carlo budget");
        experiments.push_back(e);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        auto cfg = read_config_or_default(common.config);
        auto model = model_from_config(cfg);

        if (*sim) {
            if (n < 2) throw DomainError("simulate: --n must be at least 2");
            auto spec = moment_from_config(cfg);
            auto s = simulate_network(model, n, common.seed, static_cast<std::uint64_t>(rep));
            ensure_dir(common.out);
            emit(common.out, "nodes.csv", nodes_csv(s.X));
            emit(common.out, "edges.csv", edges_csv(s.L));
            nlohmann::ordered_json j;
            j["n"] = n;
            j["seed"] = common.seed;
            j["replication"] = rep;
            j["converged"] = s.converged;
            j["edges"] = s.L.edge_count();
            if (s.converged) {
                auto m = compute_moment(s.L, s.X, spec, model.types.size());
                j["moment"] = m;
            } else {
                j["sweeps"] = s.cycle.sweeps;
            }
            if (common.out.empty()) std::cout << edges_csv(s.L);
            else std::cout << j.dump(2) << "\n";
            return s.converged ? kOk : kThresholdFailure;
        }

        if (*oracle) {
            if (n < 2 || n > n_max || n_max > 7)
                throw DomainError("oracle: need 2 <= n <= n-max <= 7");
            auto r = run_oracle(model, n, draws, common.seed, common.threads, EnumerationOptions{n_max});
            std::cout << "agreement: " << r.agreement << "/" << r.draws << "\n";
            std::cout << "converged: " << r.converged << "/" << r.draws << "\n";
            std::cout << "containment: " << r.contained << "/" << r.converged << "\n";
            std::cout << "stable networks: " << r.stable_networks << "\n";
            bool ok = r.agreement == r.draws && r.contained == r.converged;
            return ok ? kOk : kThresholdFailure;
        }

        if (*solve) {
            JointOptions jo;
            jo.tol = tol;
            jo.extra_starts = extra_starts;
            jo.seed = derive_seed("joint", common.seed);
            auto res = solve_joint(model, jo);
            nlohmann::ordered_json j;
            j["converged"] = res.diagnostics.converged;
            j["unique"] = res.unique;
            j["start_discrepancy"] = res.start_discrepancy;
            j["contraction_bound"] = contraction_bound(res.state.m, model);
            j["state"] = state_json(res.state, model);
            j["diagnostics"] = diagnostics_json(res.diagnostics);
            ensure_dir(common.out);
            emit(common.out, "state.json", j.dump(2) + "\n");
            std::cout << j.dump(2) << "\n";
            return res.diagnostics.converged ? kOk : kThresholdFailure;
        }

        if (*moment) {
            auto spec = moment_from_config(cfg);
            std::ifstream nf(nodes_path), ef(edges_path);
            auto X = read_nodes(nf, model.types.size());
            auto L = read_edges(ef, static_cast<int>(X.size()));
            auto m = compute_moment(L, X, spec, model.types.size());
            nlohmann::ordered_json j;
            j["n"] = X.size();
            j["edges"] = L.edge_count();
            j["p_n"] = spec.p_n(static_cast<int>(X.size()));
            j["moment"] = m;
            std::cout << j.dump(2) << "\n";
            return kOk;
        }

        for (auto* e : experiments) {
            if (!*e) continue;
            ExperimentPlan plan;
            plan_from_config(cfg, plan);
            plan.seed = common.seed;
            plan.threads = common.threads;
            if (!n_grid.empty()) plan.n_grid = n_grid;
            if (reps > 0) plan.reps = reps;
            if (mc_budget > 0) plan.mc_budget = mc_budget;
            const std::string name = e->get_name();
            ExperimentReport r;
            if (name == "lln") r = run_lln(plan);
            else if (name == "bias") r = run_bias(plan);
            else if (name == "clt") r = run_clt(plan);
            else if (name == "logit-rate") r = run_logit_rate(plan);
            else {
                auto panel = common.config.empty() ? default_gap_panel() : std::vector<PayoffModel>{model};
                r = run_sampling_gap(panel, plan);
            }
            return emit_report(r, common.out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const RefusedModel& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kUsageError;
    } catch (const ExperimentAborted& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return kThresholdFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kThresholdFailure;
    }
    return kUsageError;
}
