#pragma once

// Orchestration behind the command-line front end: sample -> cluster ->
// solve each controller -> evaluate, with every artifact written under the
// configured output directory.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdpchemo/config.hpp"
#include "sdpchemo/csv.hpp"
#include "sdpchemo/errors.hpp"
#include "sdpchemo/policy_sim.hpp"
#include "sdpchemo/regressor.hpp"
#include "sdpchemo/solver.hpp"
#include "sdpchemo/uncertainty.hpp"
#include "sdpchemo/version.hpp"

namespace sdpchemo {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDivergence = 3, kExitIo = 4 };

/// Writes named files into one directory and remembers what it wrote.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& content) {
        if (name.find('/') != std::string::npos || name.find("..") != std::string::npos)
            throw IoError("artifact name escapes the output directory: " + name);
        csv::write_file((dir_ / name).string(), content);
        if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
    }

    [[nodiscard]] std::filesystem::path path(const std::string& name) const { return dir_ / name; }
    [[nodiscard]] const std::vector<std::string>& written() const { return written_; }
    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

inline KMeansResult build_clusters(const RunConfig& cfg, bool dirac) {
    const auto model = cfg.uncertainty_model(dirac);
    const auto samples = psi_samples(sample_params(model, model.sample_count));
    return kmeans_psi(samples, model.cluster_count, cfg.clustering_seed());
}

inline EvalConfig eval_config(const RunConfig& cfg) {
    EvalConfig e;
    e.n_x0 = cfg.evaluation.n_x0;
    e.n_p = cfg.evaluation.n_p;
    e.n_sim = cfg.evaluation.n_sim;
    e.tau = cfg.solver.tau;
    e.cost = cfg.cost;
    e.dispersion = cfg.uncertainty_model(false);
    e.dispersion.relative_std = cfg.evaluation.relative_std;
    e.seed_x0 = cfg.eval_x0_seed();
    e.seed_p = cfg.eval_p_seed();
    e.threads = cfg.threads;
    return e;
}

struct ControllerOutcome {
    std::string id;
    SolveStatus status = SolveStatus::max_iterations;
    int iterations = 0;
    double wall_ms = 0.0;
    double b_hat_final = 0.0;
    std::string message;
};

inline const char* status_name(SolveStatus s) {
    switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::diverged: return "diverged";
    }
    return "unknown";
}

inline nlohmann::json outcome_json(const ControllerOutcome& o, const SolverConfig& s) {
    return {{"id", o.id},
            {"status", status_name(o.status)},
            {"converged", o.status == SolveStatus::converged},
            {"iterations", o.iterations},
            {"wall_ms", o.wall_ms},
            {"b_hat_final", o.b_hat_final},
            {"gamma", s.gamma},
            {"alpha", s.alpha},
            {"message", o.message}};
}

/// Solves one controller and writes its qtable, convergence log, model dump
/// and status file.
inline ControllerOutcome solve_controller(const RunConfig& cfg, const ControllerSpec& ctl, const ClusterSet& clusters,
                                          ArtifactWriter& out, std::ostream& log, KernelModel* model_out = nullptr) {
    const auto scfg = cfg.solver_config(ctl);
    log << "solving controller '" << ctl.id << "' (alpha=" << scfg.alpha << ", gamma=" << scfg.gamma
        << ", clusters=" << clusters.size() << ", grid=" << scfg.resolution << "^4x4)\n";
    const auto res = solve(scfg, clusters);
    ControllerOutcome o;
    o.id = ctl.id;
    o.status = res.status;
    o.iterations = res.iterations();
    o.wall_ms = res.wall_ms;
    o.b_hat_final = res.log.records.empty() ? 0.0 : res.log.records.back().b_hat;
    o.message = res.message;
    out.write("qtable_" + ctl.id + ".csv", qtable_to_csv(res.table));
    out.write("convergence_" + ctl.id + ".csv", log_to_csv(res.log));
    out.write("model_" + ctl.id + ".csv", model_to_csv(res.model));
    out.write("status_" + ctl.id + ".json", outcome_json(o, scfg).dump(2) + "\n");
    log << "  " << status_name(o.status) << " after " << o.iterations << " iterations";
    if (!res.log.records.empty()) log << ", final diff " << res.log.records.back().diff_inf;
    log << ", " << o.wall_ms << " ms\n";
    if (!o.message.empty()) log << "  " << o.message << '\n';
    if (model_out) *model_out = res.model;
    return o;
}

inline nlohmann::json manifest_json(const RunConfig& cfg, const std::vector<std::string>& artifacts,
                                    const std::string& command, int exit_code) {
    return {{"command", command},
            {"version", kVersion},
            {"compiler", kCompiler},
            {"exit_code", exit_code},
            {"seeds",
             {{"master", cfg.seed},
              {"sampling", cfg.sampling_seed()},
              {"clustering", cfg.clustering_seed()},
              {"evaluation_x0", cfg.eval_x0_seed()},
              {"evaluation_p", cfg.eval_p_seed()}}},
            {"config", config_to_json(cfg)},
            {"artifacts", artifacts}};
}

struct PipelineOutcome {
    int exit_code = kExitOk;
    std::string message;
    std::vector<std::string> artifacts;
};

/// Writes clusters.csv for the dispersed model (or the dirac one when
/// `dirac` is set).
inline PipelineOutcome sample_clusters_command(const RunConfig& cfg, bool dirac, std::ostream& log) {
    ArtifactWriter out(cfg.output_dir);
    const auto km = build_clusters(cfg, dirac);
    if (!km.warning.empty()) log << "warning: " << km.warning << '\n';
    out.write("clusters.csv", clusters_to_csv(km.clusters));
    log << "wrote " << km.clusters.size() << " clusters from " << cfg.uncertainty.sample_count << " samples\n";
    PipelineOutcome po;
    po.artifacts = out.written();
    out.write("manifest.json", manifest_json(cfg, po.artifacts, "sample-clusters", kExitOk).dump(2) + "\n");
    po.artifacts = out.written();
    return po;
}

namespace detail {

struct ClusterCache {
    std::optional<ClusterSet> dispersed;
    std::optional<ClusterSet> dirac;

    const ClusterSet& get(const RunConfig& cfg, bool is_dirac, std::ostream& log) {
        auto& slot = is_dirac ? dirac : dispersed;
        if (!slot) {
            auto km = build_clusters(cfg, is_dirac);
            if (!km.warning.empty() && !is_dirac) log << "warning: " << km.warning << '\n';
            slot = std::move(km.clusters);
        }
        return *slot;
    }
};

inline void write_clusters(const RunConfig& cfg, ClusterCache& cache, ArtifactWriter& out, std::ostream& log) {
    bool any_dispersed = false, any_dirac = false;
    for (const auto& c : cfg.controllers) (c.dirac ? any_dirac : any_dispersed) = true;
    if (any_dispersed) out.write("clusters.csv", clusters_to_csv(cache.get(cfg, false, log)));
    if (any_dirac) out.write(any_dispersed ? "clusters_dirac.csv" : "clusters.csv",
                             clusters_to_csv(cache.get(cfg, true, log)));
}

} // namespace detail

/// Solves one controller (`only` set) or every configured controller.
inline PipelineOutcome solve_command(const RunConfig& cfg, const std::string& only, std::ostream& log) {
    ArtifactWriter out(cfg.output_dir);
    detail::ClusterCache cache;
    PipelineOutcome po;
    for (const auto& ctl : cfg.controllers) {
        if (!only.empty() && ctl.id != only) continue;
        const auto& clusters = cache.get(cfg, ctl.dirac, log);
        out.write(ctl.dirac ? "clusters_dirac.csv" : "clusters.csv", clusters_to_csv(clusters));
        const auto o = solve_controller(cfg, ctl, clusters, out, log);
        if (o.status == SolveStatus::diverged) {
            po.exit_code = kExitDivergence;
            po.message = "controller '" + ctl.id + "' diverged: " + o.message;
            break;
        }
    }
    po.artifacts = out.written();
    out.write("manifest.json", manifest_json(cfg, po.artifacts, "solve", po.exit_code).dump(2) + "\n");
    po.artifacts = out.written();
    return po;
}

inline nlohmann::json evaluation_summary(const EvalReport& rep, const std::vector<nlohmann::json>& statuses,
                                         double eval_ms) {
    auto summary = report_summary(rep);
    nlohmann::json converged = nlohmann::json::object(), iterations = nlohmann::json::object(),
                   wall = nlohmann::json::object();
    for (const auto& s : statuses) {
        const std::string id = s.at("id");
        converged[id] = s.at("converged");
        iterations[id] = s.at("iterations");
        wall[id] = s.at("wall_ms");
    }
    wall["evaluation"] = eval_ms;
    summary["converged_flags"] = converged;
    summary["iterations"] = iterations;
    summary["wall_ms"] = wall;
    return summary;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
}

inline EvalReport run_evaluation(const RunConfig& cfg, const std::vector<NamedPolicy>& policies,
                                 const std::vector<nlohmann::json>& statuses, ArtifactWriter& out,
                                 std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    log << "evaluating " << policies.size() << " controllers on " << cfg.evaluation.n_x0 << "x" << cfg.evaluation.n_p
        << " (x0, p) pairs, horizon " << cfg.evaluation.n_sim << '\n';
    auto rep = evaluate_monte_carlo(policies, eval_config(cfg));
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.write("eval_report.csv", report_to_csv(rep));
    const auto summary = evaluation_summary(rep, statuses, ms);
    out.write("summary.json", summary.dump(2) + "\n");
    for (std::size_t c = 1; c < rep.controllers.size(); ++c) {
        const auto& id = rep.controllers[c];
        log << "  " << id << ": mean J ratio vs " << rep.controllers[0] << " = "
            << summary["mean_ratios"][id]["performance"] << " [" << summary["trend"][id].get<std::string>() << "]\n";
    }
    return rep;
}

/// Evaluates controllers from model_<id>.csv files in the output directory.
inline PipelineOutcome evaluate_command(const RunConfig& cfg, std::ostream& log) {
    ArtifactWriter out(cfg.output_dir);
    std::vector<NamedPolicy> policies;
    std::vector<nlohmann::json> statuses;
    for (const auto& ctl : cfg.controllers) {
        policies.push_back({ctl.id, {read_model_csv(out.path("model_" + ctl.id + ".csv").string()), cfg.doses}});
        const auto status_path = out.path("status_" + ctl.id + ".json");
        if (std::filesystem::exists(status_path)) {
            statuses.push_back(read_json_file(status_path.string()));
        } else {
            statuses.push_back({{"id", ctl.id}, {"converged", nullptr}, {"iterations", nullptr}, {"wall_ms", nullptr}});
        }
    }
    run_evaluation(cfg, policies, statuses, out, log);
    PipelineOutcome po;
    po.artifacts = out.written();
    out.write("manifest.json", manifest_json(cfg, po.artifacts, "evaluate", kExitOk).dump(2) + "\n");
    po.artifacts = out.written();
    return po;
}

/// Full run: clusters, every controller, evaluation, manifest. On divergence
/// the artifacts written so far are kept and the exit code is 3.
inline PipelineOutcome run_pipeline(const RunConfig& cfg, std::ostream& log) {
    ArtifactWriter out(cfg.output_dir);
    detail::ClusterCache cache;
    detail::write_clusters(cfg, cache, out, log);

    PipelineOutcome po;
    std::vector<NamedPolicy> policies;
    std::vector<nlohmann::json> statuses;
    for (const auto& ctl : cfg.controllers) {
        KernelModel model;
        const auto o = solve_controller(cfg, ctl, cache.get(cfg, ctl.dirac, log), out, log, &model);
        statuses.push_back(outcome_json(o, cfg.solver_config(ctl)));
        if (o.status == SolveStatus::diverged) {
            po.exit_code = kExitDivergence;
            po.message = "controller '" + ctl.id + "' diverged: " + o.message;
            break;
        }
        policies.push_back({ctl.id, {std::move(model), cfg.doses}});
    }
    if (po.exit_code == kExitOk) run_evaluation(cfg, policies, statuses, out, log);

    po.artifacts = out.written();
    out.write("manifest.json", manifest_json(cfg, po.artifacts, "run", po.exit_code).dump(2) + "\n");
    po.artifacts = out.written();
    return po;
}

/// Loads the config and runs the pipeline, mapping failures to exit codes.
inline PipelineOutcome run_pipeline(const std::string& config_path, std::ostream& log) {
    PipelineOutcome po;
    try {
        return run_pipeline(load_config(config_path), log);
    } catch (const ConfigError& e) {
        po.exit_code = kExitConfig;
        po.message = e.what();
    } catch (const IoError& e) {
        po.exit_code = kExitIo;
        po.message = e.what();
    } catch (const NumericalError& e) {
        po.exit_code = kExitDivergence;
        po.message = e.what();
    }
    return po;
}

} // namespace sdpchemo
