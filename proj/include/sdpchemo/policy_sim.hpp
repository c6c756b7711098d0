#pragma once

// Feedback dose law from a fitted Q model, closed-loop simulation and the
// paired Monte Carlo comparison of several controllers against a baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdpchemo/csv.hpp"
#include "sdpchemo/errors.hpp"
#include "sdpchemo/model.hpp"
#include "sdpchemo/parallel.hpp"
#include "sdpchemo/regressor.hpp"
#include "sdpchemo/uncertainty.hpp"

namespace sdpchemo {

struct FeedbackPolicy {
    KernelModel model;
    DoseSet doses;
};

/// argmin over doses of Q(x, v) from a vector of four values; ties pick the
/// earliest (lowest) dose.
inline std::size_t argmin_dose(const std::array<double, kDoseCount>& values) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < kDoseCount; ++v)
        if (values[v] < values[best]) best = v;
    return best;
}

inline Dose select_dose(const FeedbackPolicy& policy, const NormalizedState& x) {
    return policy.doses.at(argmin_dose(predict_doses(policy.model, x, policy.doses)));
}

struct SimResult {
    std::vector<NormalizedState> states; // n_sim + 1 entries
    std::vector<Dose> doses;             // dose applied at each state
    double j_cl = 0.0;
    double min_x2 = 0.0;
    double mean_x2 = 0.0;
    bool constraint_ok = true;
};

inline constexpr double kBlowUpLimit = 1e3;

/// J_cl = sum_{k=0}^{n_sim} L(x(k), u(k)) under u(k) = select_dose(x(k)).
inline SimResult simulate_closed_loop(const NormalizedState& x0, const ModelParams& p, const FeedbackPolicy& policy,
                                      int n_sim, double tau, const CostParams& cost) {
    if (n_sim < 0) throw InvalidInput("simulation horizon must be >= 0");
    SimResult out;
    out.states.reserve(static_cast<std::size_t>(n_sim) + 1);
    out.doses.reserve(static_cast<std::size_t>(n_sim) + 1);
    NormalizedState x = x0;
    double x2_sum = 0.0;
    out.min_x2 = x0[1];
    for (int k = 0; k <= n_sim; ++k) {
        for (double c : x.v)
            if (!std::isfinite(c) || c > kBlowUpLimit)
                throw NumericalOverflow("closed-loop state blew up at step " + std::to_string(k));
        const Dose u = select_dose(policy, x);
        out.states.push_back(x);
        out.doses.push_back(u);
        out.j_cl += stage_cost(x, u, cost);
        x2_sum += x[1];
        out.min_x2 = std::min(out.min_x2, x[1]);
        if (k < n_sim) {
            try {
                x = normalize(euler_step(denormalize(x), u, p, tau));
            } catch (const NumericalOverflow&) {
                throw NumericalOverflow("closed-loop state overflowed at step " + std::to_string(k + 1));
            }
        }
    }
    out.mean_x2 = x2_sum / static_cast<double>(n_sim + 1);
    out.constraint_ok = out.min_x2 >= cost.x2_min;
    return out;
}

struct NamedPolicy {
    std::string id;
    FeedbackPolicy policy;
};

struct EvalConfig {
    std::size_t n_x0 = 100;
    std::size_t n_p = 200;
    int n_sim = 50;
    double tau = 0.25;
    CostParams cost;
    UncertaintyModel dispersion; // evaluation Pi; its seed is ignored
    std::uint64_t seed_x0 = 2;
    std::uint64_t seed_p = 3;
    std::size_t threads = 0;
};

struct EvalRow {
    std::size_t x0_id = 0;
    std::size_t p_id = 0;
    std::size_t controller = 0;
    double j_cl = 0.0;
    double mean_x2 = 0.0;
    double min_x2 = 0.0;
    bool constraint_ok = false;
};

/// Per non-baseline controller comparison with controller 0.
struct ControllerComparison {
    std::vector<double> performance_ratios; // J_c / J_0 where J_0 > 0
    std::vector<double> lymphocyte_ratios;  // mean_x2_c / mean_x2_0 where mean_x2_0 > 0
    std::size_t missing_performance = 0;
    std::size_t missing_lymphocyte = 0;
    std::vector<double> satisfaction_improvement; // per x0, percentage points vs baseline
};

struct EvalReport {
    std::vector<std::string> controllers;
    std::size_t n_x0 = 0;
    std::size_t n_p = 0;
    std::vector<NormalizedState> initial_states;
    std::vector<EvalRow> rows; // ordered by (x0_id, p_id, controller)
    std::vector<std::vector<double>> satisfaction_pct; // [controller][x0]
    std::vector<ControllerComparison> comparisons;     // index c-1 for controller c >= 1
};

inline std::vector<NormalizedState> sample_initial_states(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<NormalizedState> out(n);
    for (auto& x : out)
        for (double& c : x.v) c = unit(rng);
    return out;
}

/// Runs every controller on the same (x0, p) pairs: n_x0 uniform initial
/// states in [0,1]^4 and n_p draws of the dispersed parameters per state.
inline EvalReport evaluate_monte_carlo(const std::vector<NamedPolicy>& policies, const EvalConfig& cfg) {
    if (policies.empty()) throw InvalidInput("no policies to evaluate");
    if (cfg.n_x0 < 1 || cfg.n_p < 1) throw InvalidInput("n_x0 and n_p must be >= 1");
    const std::size_t nc = policies.size();

    EvalReport rep;
    rep.n_x0 = cfg.n_x0;
    rep.n_p = cfg.n_p;
    for (const auto& p : policies) rep.controllers.push_back(p.id);
    rep.initial_states = sample_initial_states(cfg.n_x0, cfg.seed_x0);

    UncertaintyModel pi = cfg.dispersion;
    pi.seed = cfg.seed_p;
    const auto params = sample_params(pi, cfg.n_x0 * cfg.n_p);

    const std::size_t pairs = cfg.n_x0 * cfg.n_p;
    rep.rows.resize(pairs * nc);
    parallel_for(pairs * nc, cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t pair = idx / nc;
            const std::size_t c = idx % nc;
            const std::size_t x0_id = pair / cfg.n_p;
            const auto sim = simulate_closed_loop(rep.initial_states[x0_id], params[pair], policies[c].policy,
                                                  cfg.n_sim, cfg.tau, cfg.cost);
            rep.rows[idx] = {x0_id, pair % cfg.n_p, c, sim.j_cl, sim.mean_x2, sim.min_x2, sim.constraint_ok};
        }
    });

    rep.satisfaction_pct.assign(nc, std::vector<double>(cfg.n_x0, 0.0));
    for (const auto& row : rep.rows)
        if (row.constraint_ok) rep.satisfaction_pct[row.controller][row.x0_id] += 1.0;
    for (auto& per_c : rep.satisfaction_pct)
        for (double& v : per_c) v = 100.0 * v / static_cast<double>(cfg.n_p);

    rep.comparisons.resize(nc - 1);
    for (std::size_t pair = 0; pair < pairs; ++pair) {
        const EvalRow& base = rep.rows[pair * nc];
        for (std::size_t c = 1; c < nc; ++c) {
            const EvalRow& row = rep.rows[pair * nc + c];
            auto& cmp = rep.comparisons[c - 1];
            if (base.j_cl > 0.0)
                cmp.performance_ratios.push_back(row.j_cl / base.j_cl);
            else
                ++cmp.missing_performance;
            if (base.mean_x2 > 0.0)
                cmp.lymphocyte_ratios.push_back(row.mean_x2 / base.mean_x2);
            else
                ++cmp.missing_lymphocyte;
        }
    }
    for (std::size_t c = 1; c < nc; ++c) {
        auto& imp = rep.comparisons[c - 1].satisfaction_improvement;
        imp.resize(cfg.n_x0);
        for (std::size_t i = 0; i < cfg.n_x0; ++i) imp[i] = rep.satisfaction_pct[c][i] - rep.satisfaction_pct[0][i];
    }
    return rep;
}

inline std::string report_to_csv(const EvalReport& rep) {
    std::ostringstream out;
    out << "x0_id,p_id,controller,J_cl,mean_x2,min_x2,constraint_ok\n";
    for (const auto& r : rep.rows)
        out << r.x0_id << ',' << r.p_id << ',' << rep.controllers[r.controller] << ',' << csv::format_double(r.j_cl)
            << ',' << csv::format_double(r.mean_x2) << ',' << csv::format_double(r.min_x2) << ','
            << (r.constraint_ok ? 1 : 0) << '\n';
    return out.str();
}

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;
};

/// Uniform bins over the observed range; a degenerate range puts everything in bin 0.
inline Histogram histogram(const std::vector<double>& v, std::size_t bins = 50) {
    Histogram h;
    h.counts.assign(bins, 0);
    if (v.empty()) return h;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    h.lo = *mn;
    h.hi = *mx;
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (double x : v) {
        std::size_t b = 0;
        if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((x - h.lo) / width));
        ++h.counts[b];
    }
    return h;
}

inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

/// Aggregates for external plotting and the trend check: a stochastic
/// controller "passes" when its mean performance ratio is below 1.
inline nlohmann::json report_summary(const EvalReport& rep) {
    using nlohmann::json;
    static constexpr std::array<double, 7> kLevels{0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};
    json quant = json::object(), lymph = json::object(), sat = json::object(), hist = json::object(),
         means = json::object(), trend = json::object(), missing = json::object();
    for (std::size_t c = 1; c < rep.controllers.size(); ++c) {
        const auto& cmp = rep.comparisons[c - 1];
        const auto& id = rep.controllers[c];
        json q = json::object(), ql = json::object();
        for (double lv : kLevels) {
            std::ostringstream key;
            key << lv;
            q[key.str()] = json_number(quantile(cmp.performance_ratios, lv));
            ql[key.str()] = json_number(quantile(cmp.lymphocyte_ratios, lv));
        }
        quant[id] = q;
        lymph[id] = ql;
        sat[id] = cmp.satisfaction_improvement;
        const auto hp = histogram(cmp.performance_ratios);
        const auto hl = histogram(cmp.lymphocyte_ratios);
        hist[id] = {{"performance", {{"lo", hp.lo}, {"hi", hp.hi}, {"counts", hp.counts}}},
                    {"lymphocytes", {{"lo", hl.lo}, {"hi", hl.hi}, {"counts", hl.counts}}}};
        const double mp = mean_of(cmp.performance_ratios);
        means[id] = {{"performance", json_number(mp)},
                     {"lymphocytes", json_number(mean_of(cmp.lymphocyte_ratios))},
                     {"satisfaction_improvement", json_number(mean_of(cmp.satisfaction_improvement))}};
        trend[id] = std::isfinite(mp) && mp < 1.0 ? "pass" : "warn";
        missing[id] = {{"performance", cmp.missing_performance}, {"lymphocytes", cmp.missing_lymphocyte}};
    }
    return json{{"controllers", rep.controllers},
                {"baseline", rep.controllers.front()},
                {"pairs", rep.n_x0 * rep.n_p},
                {"rows", rep.rows.size()},
                {"ratio_quantiles", quant},
                {"lymphocyte_ratio_quantiles", lymph},
                {"satisfaction_improvement", sat},
                {"satisfaction_pct", rep.satisfaction_pct},
                {"mean_ratios", means},
                {"trend", trend},
                {"missing_ratios", missing},
                {"histograms", hist}};
}

inline std::string trajectory_to_csv(const SimResult& sim, const CostParams& cost) {
    std::ostringstream out;
    out << "k,x1,x2,x3,x4,u1,u2,stage_cost\n";
    for (std::size_t k = 0; k < sim.states.size(); ++k) {
        out << k;
        for (double c : sim.states[k].v) out << ',' << csv::format_double(c);
        out << ',' << csv::format_double(sim.doses[k].u1) << ',' << csv::format_double(sim.doses[k].u2) << ','
            << csv::format_double(stage_cost(sim.states[k], sim.doses[k], cost)) << '\n';
    }
    return out.str();
}

} // namespace sdpchemo
