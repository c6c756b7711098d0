#pragma once

// Run configuration: a JSON tree whose every field is optional. An empty
// object gives the full-scale default experiment.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdpchemo/errors.hpp"
#include "sdpchemo/model.hpp"
#include "sdpchemo/solver.hpp"
#include "sdpchemo/uncertainty.hpp"

namespace sdpchemo {

struct ControllerSpec {
    std::string id;
    bool dirac = false;
    double alpha = 0.0;
    std::optional<double> gamma; // overrides solver.gamma

    friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

struct EvaluationSettings {
    std::size_t n_x0 = 100;
    std::size_t n_p = 200;
    int n_sim = 50;
    double relative_std = 0.4;

    friend bool operator==(const EvaluationSettings&, const EvaluationSettings&) = default;
};

struct SolverSettings {
    std::size_t grid_resolution = 7;
    double gamma = 0.95;
    double tau = 0.25;
    double tol_inf = 1e-6;
    int max_iter = 500;
    double ridge_lambda = 1e-3;
    double bandwidth = 0.0;

    friend bool operator==(const SolverSettings&, const SolverSettings&) = default;
};

struct UncertaintySettings {
    double relative_std = 0.4;
    std::size_t sample_count = 10000;
    std::size_t cluster_count = 20;
    double truncation = 0.01;

    friend bool operator==(const UncertaintySettings&, const UncertaintySettings&) = default;
};

inline std::vector<ControllerSpec> default_controllers() {
    return {{"nominal", true, 0.0, std::nullopt}, {"expectation", false, 0.0, std::nullopt},
            {"variance", false, 0.1, std::nullopt}};
}

struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";
    std::size_t threads = 0;
    ModelParams model = ModelParams::nominal();
    CostParams cost;
    DoseSet doses;
    UncertaintySettings uncertainty;
    SolverSettings solver;
    std::vector<ControllerSpec> controllers = default_controllers();
    EvaluationSettings evaluation;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    // Stage seeds derived from the master seed.
    [[nodiscard]] std::uint64_t sampling_seed() const { return seed; }
    [[nodiscard]] std::uint64_t clustering_seed() const { return seed + 1; }
    [[nodiscard]] std::uint64_t eval_x0_seed() const { return seed + 2; }
    [[nodiscard]] std::uint64_t eval_p_seed() const { return seed + 3; }

    [[nodiscard]] UncertaintyModel uncertainty_model(bool dirac) const {
        UncertaintyModel u;
        u.nominal = model;
        u.relative_std = uncertainty.relative_std;
        u.dirac = dirac;
        u.sample_count = uncertainty.sample_count;
        u.cluster_count = uncertainty.cluster_count;
        u.truncation = uncertainty.truncation;
        u.seed = sampling_seed();
        return u;
    }

    [[nodiscard]] SolverConfig solver_config(const ControllerSpec& c) const {
        SolverConfig s;
        s.resolution = solver.grid_resolution;
        s.gamma = c.gamma.value_or(solver.gamma);
        s.alpha = c.alpha;
        s.tau = solver.tau;
        s.tol_inf = solver.tol_inf;
        s.max_iter = solver.max_iter;
        s.ridge_lambda = solver.ridge_lambda;
        s.bandwidth = solver.bandwidth;
        s.threads = threads;
        s.cost = cost;
        s.doses = doses;
        s.h = model.h;
        return s;
    }

    [[nodiscard]] const ControllerSpec& controller(const std::string& id) const {
        for (const auto& c : controllers)
            if (c.id == id) return c;
        throw ConfigError("controllers: no controller with id '" + id + "'");
    }
};

namespace detail {

inline bool valid_id(const std::string& id) {
    if (id.empty()) return false;
    for (char ch : id) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                        ch == '-';
        if (!ok) return false;
    }
    return true;
}

class Reader {
public:
    Reader(const nlohmann::json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(where() + "expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!node_.contains(key)) return;
        const auto& v = node_.at(key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            out = v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError(field(key) + ": wrong type");
        }
    }

    void child(const char* key, const std::function<void(Reader&)>& fn) {
        seen_.insert(key);
        if (!node_.contains(key)) return;
        Reader r(node_.at(key), field(key));
        fn(r);
        r.finish();
    }

    void mark(const char* key) { seen_.insert(key); }

    void finish() const {
        for (const auto& [k, _] : node_.items())
            if (!seen_.count(k)) throw ConfigError(field(k.c_str()) + ": unknown key");
    }

    [[nodiscard]] std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    [[nodiscard]] const nlohmann::json& node() const { return node_; }

private:
    [[nodiscard]] std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    const nlohmann::json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void check(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw ConfigError(field + ": " + msg);
}

} // namespace detail

inline void validate(const RunConfig& c) {
    using detail::check;
    check(c.model.h > 0.0 && std::isfinite(c.model.h), "model.h", "must be > 0");
    for (const auto& f : ModelParams::uncertain_fields) {
        const double v = c.model.*(f.member);
        check(v > 0.0 && std::isfinite(v), "model." + std::string(f.name), "must be > 0");
    }
    check(c.cost.rho_c >= 0.0, "cost.rho_c", "must be >= 0");
    check(c.cost.rho_1 >= 0.0, "cost.rho_1", "must be >= 0");
    check(c.cost.rho_2 >= 0.0, "cost.rho_2", "must be >= 0");
    check(c.cost.x2_min > 0.0 && c.cost.x2_min < 1.0, "cost.x2_min", "must lie in (0,1)");
    check(c.doses.u1_max > 0.0 && std::isfinite(c.doses.u1_max), "doses.u1_max", "must be > 0");
    check(c.doses.u2_max > 0.0 && std::isfinite(c.doses.u2_max), "doses.u2_max", "must be > 0");
    check(c.uncertainty.relative_std >= 0.0, "uncertainty.relative_std", "must be >= 0");
    check(c.uncertainty.sample_count >= 1, "uncertainty.sample_count", "must be >= 1");
    check(c.uncertainty.cluster_count >= 1, "uncertainty.cluster_count", "must be >= 1");
    check(c.uncertainty.cluster_count <= c.uncertainty.sample_count, "uncertainty.cluster_count",
          "must not exceed sample_count");
    check(c.uncertainty.truncation >= 0.0 && c.uncertainty.truncation < 1.0, "uncertainty.truncation",
          "must lie in [0,1)");
    check(c.solver.grid_resolution >= 2, "solver.grid_resolution", "must be >= 2");
    check(c.solver.gamma > 0.0 && c.solver.gamma <= 1.0, "solver.gamma", "gamma out of (0,1]");
    check(c.solver.tau > 0.0 && std::isfinite(c.solver.tau), "solver.tau", "must be > 0");
    check(c.solver.tol_inf > 0.0, "solver.tol_inf", "must be > 0");
    check(c.solver.max_iter >= 0, "solver.max_iter", "must be >= 0");
    check(c.solver.ridge_lambda >= 0.0, "solver.ridge_lambda", "must be >= 0");
    check(c.solver.bandwidth >= 0.0, "solver.bandwidth", "must be >= 0 (0 selects the median heuristic)");
    check(!c.controllers.empty(), "controllers", "must not be empty");
    check(c.controllers.front().dirac, "controllers[0].dirac", "the first controller must be the dirac baseline");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < c.controllers.size(); ++i) {
        const auto& ctl = c.controllers[i];
        const std::string f = "controllers[" + std::to_string(i) + "]";
        check(detail::valid_id(ctl.id), f + ".id", "must match [A-Za-z0-9_-]+");
        check(ids.insert(ctl.id).second, f + ".id", "duplicate id '" + ctl.id + "'");
        check(ctl.alpha >= 0.0 && std::isfinite(ctl.alpha), f + ".alpha", "must be >= 0");
        if (ctl.gamma) check(*ctl.gamma > 0.0 && *ctl.gamma <= 1.0, f + ".gamma", "gamma out of (0,1]");
    }
    check(c.evaluation.n_x0 >= 1, "evaluation.n_x0", "must be >= 1");
    check(c.evaluation.n_p >= 1, "evaluation.n_p", "must be >= 1");
    check(c.evaluation.n_sim >= 0, "evaluation.n_sim", "must be >= 0");
    check(c.evaluation.relative_std >= 0.0, "evaluation.relative_std", "must be >= 0");
    check(!c.output_dir.empty(), "output_dir", "must not be empty");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::Reader root(j, "");
    root.get("seed", c.seed);
    root.get("output_dir", c.output_dir);
    root.get("threads", c.threads);
    root.child("model", [&](detail::Reader& r) {
        r.get("h", c.model.h);
        for (const auto& f : ModelParams::uncertain_fields) r.get(std::string(f.name).c_str(), c.model.*(f.member));
    });
    root.child("cost", [&](detail::Reader& r) {
        r.get("rho_c", c.cost.rho_c);
        r.get("rho_1", c.cost.rho_1);
        r.get("rho_2", c.cost.rho_2);
        r.get("x2_min", c.cost.x2_min);
    });
    root.child("doses", [&](detail::Reader& r) {
        r.get("u1_max", c.doses.u1_max);
        r.get("u2_max", c.doses.u2_max);
    });
    root.child("uncertainty", [&](detail::Reader& r) {
        r.get("relative_std", c.uncertainty.relative_std);
        r.get("sample_count", c.uncertainty.sample_count);
        r.get("cluster_count", c.uncertainty.cluster_count);
        r.get("truncation", c.uncertainty.truncation);
    });
    root.child("solver", [&](detail::Reader& r) {
        r.get("grid_resolution", c.solver.grid_resolution);
        r.get("gamma", c.solver.gamma);
        r.get("tau", c.solver.tau);
        r.get("tol_inf", c.solver.tol_inf);
        r.get("max_iter", c.solver.max_iter);
        r.get("ridge_lambda", c.solver.ridge_lambda);
        r.get("bandwidth", c.solver.bandwidth);
    });
    if (j.is_object() && j.contains("controllers")) {
        const auto& arr = j.at("controllers");
        if (!arr.is_array()) throw ConfigError("controllers: expected an array");
        c.controllers.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            ControllerSpec s;
            detail::Reader r(arr[i], "controllers[" + std::to_string(i) + "]");
            r.get("id", s.id);
            r.get("dirac", s.dirac);
            r.get("alpha", s.alpha);
            double g = 0.0;
            r.get("gamma", g);
            if (arr[i].contains("gamma")) s.gamma = g;
            r.finish();
            c.controllers.push_back(s);
        }
    }
    root.mark("controllers");
    root.child("evaluation", [&](detail::Reader& r) {
        r.get("n_x0", c.evaluation.n_x0);
        r.get("n_p", c.evaluation.n_p);
        r.get("n_sim", c.evaluation.n_sim);
        r.get("relative_std", c.evaluation.relative_std);
    });
    root.finish();
    validate(c);
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    using nlohmann::json;
    json model = json::object();
    model["h"] = c.model.h;
    for (const auto& f : ModelParams::uncertain_fields) model[std::string(f.name)] = c.model.*(f.member);
    json controllers = json::array();
    for (const auto& s : c.controllers) {
        json cj{{"id", s.id}, {"dirac", s.dirac}, {"alpha", s.alpha}};
        if (s.gamma) cj["gamma"] = *s.gamma;
        controllers.push_back(cj);
    }
    return json{
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"model", model},
        {"cost", {{"rho_c", c.cost.rho_c}, {"rho_1", c.cost.rho_1}, {"rho_2", c.cost.rho_2}, {"x2_min", c.cost.x2_min}}},
        {"doses", {{"u1_max", c.doses.u1_max}, {"u2_max", c.doses.u2_max}}},
        {"uncertainty",
         {{"relative_std", c.uncertainty.relative_std},
          {"sample_count", c.uncertainty.sample_count},
          {"cluster_count", c.uncertainty.cluster_count},
          {"truncation", c.uncertainty.truncation}}},
        {"solver",
         {{"grid_resolution", c.solver.grid_resolution},
          {"gamma", c.solver.gamma},
          {"tau", c.solver.tau},
          {"tol_inf", c.solver.tol_inf},
          {"max_iter", c.solver.max_iter},
          {"ridge_lambda", c.solver.ridge_lambda},
          {"bandwidth", c.solver.bandwidth}}},
        {"controllers", controllers},
        {"evaluation",
         {{"n_x0", c.evaluation.n_x0},
          {"n_p", c.evaluation.n_p},
          {"n_sim", c.evaluation.n_sim},
          {"relative_std", c.evaluation.relative_std}}},
    };
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

} // namespace sdpchemo
