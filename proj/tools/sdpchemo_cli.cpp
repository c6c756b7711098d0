// Command-line front end for the variance-penalized dosing solver.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sdpchemo/config.hpp"
#include "sdpchemo/pipeline.hpp"
#include "sdpchemo/policy_sim.hpp"
#include "sdpchemo/solver.hpp"

using namespace sdpchemo;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "JSON run configuration (defaults apply to missing fields)");
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_option("--out", o.out, "output directory override");
    cmd->add_option("--threads", o.threads, "worker cap (0 = hardware concurrency); results do not depend on it");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.threads) cfg.threads = *o.threads;
    validate(cfg);
    return cfg;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& f : csv::split(text)) out.push_back(csv::parse_double(f));
    return out;
}

int report(const PipelineOutcome& po) {
    if (!po.message.empty()) std::cerr << "error: " << po.message << '\n';
    return po.exit_code;
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitDivergence;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic optimal feedback dosing for combined immuno-chemotherapy"};
    app.require_subcommand(1);

    CommonOptions run_opts, solve_opts, sample_opts, eval_opts, diag_opts, sim_opts;

    auto* run = app.add_subcommand("run", "full pipeline: clusters, all controllers, Monte Carlo evaluation");
    add_common(run, run_opts);

    std::string solve_controller_id;
    auto* solve_cmd = app.add_subcommand(
        "solve", "solve one controller (--controller) or, without it, run the full pipeline");
    add_common(solve_cmd, solve_opts);
    solve_cmd->add_option("--controller", solve_controller_id, "controller id from the config");

    bool sample_dirac = false;
    auto* sample = app.add_subcommand("sample-clusters", "sample parameters and write clusters.csv");
    add_common(sample, sample_opts);
    sample->add_flag("--dirac", sample_dirac, "collapse the dispersion onto the nominal parameters");

    auto* evaluate = app.add_subcommand("evaluate", "Monte Carlo evaluation of saved model_<id>.csv policies");
    add_common(evaluate, eval_opts);

    std::string diag_log, diag_controller;
    std::optional<double> diag_gamma, diag_alpha, diag_b;
    auto* diagnose = app.add_subcommand("diagnose", "contraction report from a convergence log");
    add_common(diagnose, diag_opts);
    diagnose->add_option("--log", diag_log, "convergence CSV (default: <out>/convergence_<controller>.csv)");
    diagnose->add_option("--controller", diag_controller, "controller id supplying gamma/alpha and the log");
    diagnose->add_option("--gamma", diag_gamma, "discount override");
    diagnose->add_option("--alpha", diag_alpha, "variance penalty override");
    diagnose->add_option("--b-hat", diag_b, "excursion bound override (default: last logged B_hat)");

    std::string sim_controller, sim_x0 = "0.5,0.5,0.0,0.0";
    std::optional<int> sim_nsim;
    std::optional<std::size_t> sim_param_index;
    auto* simulate = app.add_subcommand("simulate", "single closed loop; prints the trajectory CSV to stdout");
    add_common(simulate, sim_opts);
    simulate->add_option("--controller", sim_controller, "controller whose model_<id>.csv drives the loop")
        ->required();
    simulate->add_option("--x0", sim_x0, "normalized initial state x1,x2,x3,x4");
    simulate->add_option("--nsim", sim_nsim, "horizon (default: evaluation.n_sim)");
    simulate->add_option("--param-index", sim_param_index,
                         "use draw k of the evaluation parameter distribution instead of the nominal parameters");

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        return guarded([&] { return report(run_pipeline(resolve(run_opts), std::cerr)); });
    }
    if (*solve_cmd) {
        return guarded([&] {
            const auto cfg = resolve(solve_opts);
            if (solve_controller_id.empty()) return report(run_pipeline(cfg, std::cerr));
            (void)cfg.controller(solve_controller_id); // unknown id is a config error
            return report(solve_command(cfg, solve_controller_id, std::cerr));
        });
    }
    if (*sample) {
        return guarded([&] { return report(sample_clusters_command(resolve(sample_opts), sample_dirac, std::cerr)); });
    }
    if (*evaluate) {
        return guarded([&] { return report(evaluate_command(resolve(eval_opts), std::cerr)); });
    }
    if (*diagnose) {
        return guarded([&] {
            double gamma = 0.95, alpha = 0.0;
            std::string path = diag_log;
            if (!diag_opts.config.empty() || !diag_controller.empty()) {
                const auto cfg = resolve(diag_opts);
                if (!diag_controller.empty()) {
                    const auto scfg = cfg.solver_config(cfg.controller(diag_controller));
                    gamma = scfg.gamma;
                    alpha = scfg.alpha;
                    if (path.empty()) path = (std::filesystem::path(cfg.output_dir) /
                                              ("convergence_" + diag_controller + ".csv")).string();
                }
            }
            if (diag_gamma) gamma = *diag_gamma;
            if (diag_alpha) alpha = *diag_alpha;
            if (path.empty()) throw ConfigError("diagnose: give --log or --controller");
            const auto log = read_log_csv(path);
            if (log.records.size() < 3) throw InvalidInput("diagnose needs at least 3 logged iterations");
            const double b_hat = diag_b.value_or(log.records.back().b_hat);
            const auto rep = contraction_diagnostic(log.diffs(), b_hat, gamma, alpha);
            std::cout << "rho_hat=" << rep.rho_hat << '\n'
                      << "rho_star=" << rep.rho_star << '\n'
                      << "within_bound=" << (rep.within_bound ? "true" : "false") << '\n'
                      << "b_hat=" << b_hat << '\n'
                      << "alpha_limit=" << rep.alpha_limit << '\n'
                      << "ratios_used=" << rep.ratios_used << '\n';
            return static_cast<int>(kExitOk);
        });
    }
    if (*simulate) {
        return guarded([&] {
            const auto cfg = resolve(sim_opts);
            (void)cfg.controller(sim_controller);
            const auto x = parse_list(sim_x0);
            if (x.size() != 4) throw ConfigError("--x0: expected four comma-separated values");
            NormalizedState x0{{x[0], x[1], x[2], x[3]}};
            ModelParams p = cfg.model;
            if (sim_param_index) {
                const auto ec = eval_config(cfg);
                auto pi = ec.dispersion;
                pi.seed = ec.seed_p;
                p = sample_params(pi, *sim_param_index + 1).back();
            }
            const FeedbackPolicy policy{
                read_model_csv((std::filesystem::path(cfg.output_dir) / ("model_" + sim_controller + ".csv")).string()),
                cfg.doses};
            const auto sim =
                simulate_closed_loop(x0, p, policy, sim_nsim.value_or(cfg.evaluation.n_sim), cfg.solver.tau, cfg.cost);
            std::cout << trajectory_to_csv(sim, cfg.cost);
            std::cerr << "J_cl=" << sim.j_cl << " min_x2=" << sim.min_x2 << " mean_x2=" << sim.mean_x2
                      << " constraint_ok=" << (sim.constraint_ok ? "true" : "false") << '\n';
            return static_cast<int>(kExitOk);
        });
    }
    return 1;
}
