#pragma once

// Fitted value iteration q+ = F(q) on the (state, dose) grid with the
// cluster-approximated mean/variance statistics of the successor values.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sdpchemo/csv.hpp"
#include "sdpchemo/errors.hpp"
#include "sdpchemo/grid.hpp"
#include "sdpchemo/model.hpp"
#include "sdpchemo/parallel.hpp"
#include "sdpchemo/regressor.hpp"
#include "sdpchemo/uncertainty.hpp"

namespace sdpchemo {

struct SolverConfig {
    std::size_t resolution = 7;
    double gamma = 0.95;
    double alpha = 0.0;
    double tau = 0.25;
    double tol_inf = 1e-6;
    int max_iter = 500;
    double ridge_lambda = 1e-3;
    double bandwidth = 0.0; // <= 0 selects the median heuristic
    std::size_t threads = 0;
    CostParams cost;
    DoseSet doses;
    double h = ModelParams::nominal().h;

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;

    void validate() const {
        if (resolution < 2) throw InvalidInput("grid resolution must be >= 2");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("gamma out of (0,1]");
        if (!(alpha >= 0.0 && std::isfinite(alpha))) throw InvalidInput("alpha must be >= 0");
        if (!(tau > 0.0 && std::isfinite(tau))) throw InvalidInput("tau must be > 0");
        if (!(tol_inf > 0.0)) throw InvalidInput("tol_inf must be > 0");
        if (max_iter < 0) throw InvalidInput("max_iter must be >= 0");
        if (!(ridge_lambda >= 0.0 && std::isfinite(ridge_lambda))) throw InvalidInput("ridge_lambda must be >= 0");
        if (!(h > 0.0 && std::isfinite(h))) throw InvalidInput("h must be > 0");
        cost.validate();
        doses.validate();
    }
};

struct QTable {
    Grid grid;
    std::vector<double> q;
};

struct IterationRecord {
    int iter = 0;
    double diff_inf = 0.0;
    double b_hat = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN(); // diff_k / diff_{k-1}
    double wall_ms = 0.0;
    double max_q = 0.0;
    double min_q = 0.0;
};

struct ConvergenceLog {
    std::vector<IterationRecord> records;

    [[nodiscard]] std::vector<double> diffs() const {
        std::vector<double> d;
        d.reserve(records.size());
        for (const auto& r : records) d.push_back(r.diff_inf);
        return d;
    }
};

enum class SolveStatus { converged, max_iterations, diverged };

struct SolveResult {
    QTable table;
    KernelModel model;
    ConvergenceLog log;
    SolveStatus status = SolveStatus::max_iterations;
    std::string message;
    double wall_ms = 0.0;

    [[nodiscard]] bool converged() const { return status == SolveStatus::converged; }
    [[nodiscard]] int iterations() const { return static_cast<int>(log.records.size()); }
};

inline std::vector<double> stage_costs(const Grid& grid, const CostParams& cost) {
    std::vector<double> out;
    out.reserve(grid.size());
    for (const auto& pt : grid.points) out.push_back(stage_cost(pt.x, pt.u, cost));
    return out;
}

/// Successor states per grid point and cluster; they do not depend on q.
struct Transitions {
    std::size_t cluster_count = 0;
    std::vector<NormalizedState> next; // index = point * cluster_count + j

    static Transitions build(const Grid& grid, const ClusterSet& clusters, double tau, double h,
                             std::size_t threads = 1) {
        Transitions t;
        t.cluster_count = clusters.size();
        t.next.resize(grid.size() * t.cluster_count);
        parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const auto& pt = grid.points[i];
                for (std::size_t j = 0; j < t.cluster_count; ++j)
                    t.next[i * t.cluster_count + j] = next_normalized(pt.x, pt.u, clusters.centers[j], tau, h);
            }
        });
        return t;
    }
};

struct DoseStatistics {
    std::array<double, kDoseCount> s_alpha{}; // mu + alpha * sigma per candidate dose
    double excursion = 0.0;                   // max_j,v |Q_j(v) - mu(v)|
};

/// mu = sum_j pi_j Q(x+_j, v), sigma = sum_j pi_j (Q(x+_j, v) - mu)^2.
template <class NextState>
DoseStatistics dose_statistics(const KernelModel& model, const ClusterSet& clusters, const DoseSet& doses,
                               double alpha, NextState next_state) {
    DoseStatistics out;
    const std::size_t n = clusters.size();
    std::array<double, kDoseCount> mu{};
    std::vector<std::array<double, kDoseCount>> values(n);
    for (std::size_t j = 0; j < n; ++j) {
        values[j] = predict_doses(model, next_state(j), doses);
        for (std::size_t v = 0; v < kDoseCount; ++v) mu[v] += clusters.weights[j] * values[j][v];
    }
    for (std::size_t v = 0; v < kDoseCount; ++v) {
        double sigma = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dev = values[j][v] - mu[v];
            sigma += clusters.weights[j] * dev * dev;
            out.excursion = std::max(out.excursion, std::abs(dev));
        }
        out.s_alpha[v] = mu[v] + alpha * sigma;
    }
    return out;
}

/// Cluster-approximated mu + alpha sigma of Q(f(x,u,.), v) for one candidate dose.
inline double s_hat_alpha(const NormalizedState& x, const Dose& u, std::size_t v, const KernelModel& model,
                          const ClusterSet& clusters, double alpha, double tau, double h, const DoseSet& doses) {
    const auto stats = dose_statistics(model, clusters, doses, alpha, [&](std::size_t j) {
        return next_normalized(x, u, clusters.centers[j], tau, h);
    });
    return stats.s_alpha.at(v);
}

struct BellmanSweep {
    std::vector<double> q;
    double b_hat = 0.0;
};

/// q+_i = L(z_i) + gamma * min_v S_alpha(z_i, v); ties keep the earliest dose.
inline BellmanSweep bellman_update(const Grid& grid, const Transitions& trans, const std::vector<double>& costs,
                                   const KernelModel& model, const ClusterSet& clusters, const SolverConfig& cfg) {
    BellmanSweep out;
    out.q.resize(grid.size());
    std::vector<double> excursion(grid.size(), 0.0);
    parallel_for(grid.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto stats = dose_statistics(model, clusters, grid.doses, cfg.alpha, [&](std::size_t j) {
                return trans.next[i * trans.cluster_count + j];
            });
            double best = stats.s_alpha[0];
            for (std::size_t v = 1; v < kDoseCount; ++v)
                if (stats.s_alpha[v] < best) best = stats.s_alpha[v];
            out.q[i] = costs[i] + cfg.gamma * best;
            excursion[i] = stats.excursion;
        }
    });
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(out.q[i])) throw DivergenceError("non-finite Bellman update at grid index " + std::to_string(i));
        out.b_hat = std::max(out.b_hat, excursion[i]);
    }
    return out;
}

inline BellmanSweep bellman_update(const QTable& table, const KernelModel& model, const ClusterSet& clusters,
                                   const SolverConfig& cfg) {
    const auto trans = Transitions::build(table.grid, clusters, cfg.tau, cfg.h, cfg.threads);
    return bellman_update(table.grid, trans, stage_costs(table.grid, cfg.cost), model, clusters, cfg);
}

/// Fixed-point iteration from q = L on the grid. Refits the regressor to q
/// every iteration; stops when |q+ - q|_inf < tol_inf, at max_iter, or when
/// the diff grows more than 10x across 20 iterations.
inline SolveResult solve(const SolverConfig& cfg, const ClusterSet& clusters) {
    cfg.validate();
    clusters.validate();
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(clock::now() - t0).count(); };

    SolveResult res;
    res.table.grid = build_grid(cfg.resolution, cfg.doses);
    const Grid& grid = res.table.grid;
    const auto costs = stage_costs(grid, cfg.cost);
    res.table.q = costs;

    const auto features = grid.features();
    const double bw = cfg.bandwidth > 0.0 ? cfg.bandwidth : median_heuristic_bandwidth(features);
    const KernelRidge ridge(features, bw, cfg.ridge_lambda);
    const auto trans = Transitions::build(grid, clusters, cfg.tau, cfg.h, cfg.threads);

    constexpr std::size_t kWindow = 20;
    constexpr double kGrowth = 10.0;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const auto model = ridge.fit(res.table.q);
        BellmanSweep sweep;
        try {
            sweep = bellman_update(grid, trans, costs, model, clusters, cfg);
        } catch (const DivergenceError& e) {
            res.status = SolveStatus::diverged;
            res.message = e.what();
            break;
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) diff = std::max(diff, std::abs(sweep.q[i] - res.table.q[i]));

        IterationRecord rec;
        rec.iter = it;
        rec.diff_inf = diff;
        rec.b_hat = sweep.b_hat;
        if (!res.log.records.empty() && res.log.records.back().diff_inf > 0.0)
            rec.ratio = diff / res.log.records.back().diff_inf;
        rec.max_q = *std::max_element(sweep.q.begin(), sweep.q.end());
        rec.min_q = *std::min_element(sweep.q.begin(), sweep.q.end());
        rec.wall_ms = elapsed_ms();
        res.log.records.push_back(rec);
        res.table.q = std::move(sweep.q);

        if (diff < cfg.tol_inf) {
            res.status = SolveStatus::converged;
            break;
        }
        const auto& recs = res.log.records;
        if (recs.size() > kWindow && diff > kGrowth * recs[recs.size() - 1 - kWindow].diff_inf) {
            res.status = SolveStatus::diverged;
            std::ostringstream msg;
            msg << "diff grew from " << recs[recs.size() - 1 - kWindow].diff_inf << " to " << diff << " over "
                << kWindow << " iterations (iteration " << it << ")";
            res.message = msg.str();
            break;
        }
    }
    res.model = ridge.fit(res.table.q);
    res.wall_ms = elapsed_ms();
    return res;
}

struct ContractionReport {
    double rho_hat = 0.0;       // median of recent diff ratios
    double rho_star = 0.0;      // gamma (1 + 2 alpha B)
    bool within_bound = false;  // rho_hat <= max(rho_star, 1)
    double alpha_limit = std::numeric_limits<double>::infinity(); // (1 - gamma) / (2 gamma B)
    std::size_t ratios_used = 0;
};

/// Compares the empirical contraction of the diff trace with gamma(1 + 2 alpha B).
/// The O(tau) term of the bound is not computable and is ignored.
inline ContractionReport contraction_diagnostic(const std::vector<double>& diffs, double b_hat, double gamma,
                                                double alpha, std::size_t window = 10) {
    ContractionReport rep;
    std::vector<double> ratios;
    const std::size_t first = diffs.size() > window + 1 ? diffs.size() - window - 1 : 0;
    for (std::size_t k = first + 1; k < diffs.size(); ++k)
        if (diffs[k - 1] > 0.0) ratios.push_back(diffs[k] / diffs[k - 1]);
    rep.ratios_used = ratios.size();
    if (!ratios.empty()) {
        std::sort(ratios.begin(), ratios.end());
        const std::size_t m = ratios.size();
        rep.rho_hat = m % 2 == 1 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
    }
    rep.rho_star = gamma * (1.0 + 2.0 * alpha * b_hat);
    rep.within_bound = rep.rho_hat <= std::max(rep.rho_star, 1.0);
    if (b_hat > 0.0 && gamma < 1.0) rep.alpha_limit = (1.0 - gamma) / (2.0 * gamma * b_hat);
    return rep;
}

inline ContractionReport contraction_diagnostic(const ConvergenceLog& log, double b_hat, const SolverConfig& cfg) {
    return contraction_diagnostic(log.diffs(), b_hat, cfg.gamma, cfg.alpha);
}

inline std::string log_to_csv(const ConvergenceLog& log) {
    std::ostringstream out;
    out << "iter,diff_inf,B_hat,ratio,wall_ms\n";
    for (const auto& r : log.records)
        out << r.iter << ',' << csv::format_double(r.diff_inf) << ',' << csv::format_double(r.b_hat) << ','
            << csv::format_double(r.ratio) << ',' << csv::format_double(r.wall_ms) << '\n';
    return out.str();
}

inline ConvergenceLog read_log_csv(const std::string& path) {
    const auto t = csv::read(path);
    const std::size_t c_iter = t.column("iter"), c_diff = t.column("diff_inf"), c_b = t.column("B_hat"),
                      c_ratio = t.column("ratio"), c_ms = t.column("wall_ms");
    ConvergenceLog log;
    for (const auto& row : t.rows) {
        IterationRecord r;
        r.iter = static_cast<int>(csv::parse_double(row[c_iter]));
        r.diff_inf = csv::parse_double(row[c_diff]);
        r.b_hat = csv::parse_double(row[c_b]);
        r.ratio = csv::parse_double(row[c_ratio]);
        r.wall_ms = csv::parse_double(row[c_ms]);
        log.records.push_back(r);
    }
    return log;
}

inline std::string qtable_to_csv(const QTable& table) {
    std::ostringstream out;
    out << "x1,x2,x3,x4,u1,u2,q\n";
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        const auto& pt = table.grid.points[i];
        for (double c : pt.x.v) out << csv::format_double(c) << ',';
        out << csv::format_double(pt.u.u1) << ',' << csv::format_double(pt.u.u2) << ','
            << csv::format_double(table.q[i]) << '\n';
    }
    return out.str();
}

} // namespace sdpchemo
