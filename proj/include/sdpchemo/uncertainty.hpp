#pragma once

// Parameter dispersion model and its compression into weighted Psi clusters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sdpchemo/csv.hpp"
#include "sdpchemo/errors.hpp"
#include "sdpchemo/model.hpp"

namespace sdpchemo {

/// p_i = (1 + nu) p_i_nominal with nu ~ N(0, relative_std^2), truncated so
/// that 1 + nu > truncation.
struct UncertaintyModel {
    ModelParams nominal = ModelParams::nominal();
    double relative_std = 0.4;
    bool dirac = false;
    std::size_t sample_count = 10000;
    std::size_t cluster_count = 20;
    double truncation = 0.01;
    std::uint64_t seed = 0;

    friend bool operator==(const UncertaintyModel&, const UncertaintyModel&) = default;

    [[nodiscard]] double effective_std() const { return dirac ? 0.0 : relative_std; }

    void validate() const {
        nominal.validate();
        if (!(relative_std >= 0.0 && std::isfinite(relative_std))) throw InvalidInput("relative_std must be >= 0");
        if (sample_count < 1) throw InvalidInput("sample_count must be >= 1");
        if (cluster_count < 1) throw InvalidInput("cluster_count must be >= 1");
        if (cluster_count > sample_count) throw InvalidInput("cluster_count must not exceed sample_count");
        if (!(truncation >= 0.0 && truncation < 1.0)) throw InvalidInput("truncation must lie in [0,1)");
    }
};

/// Draws `n` parameter vectors. Per-coordinate rejection keeps every factor
/// 1 + nu above the truncation threshold; h is never perturbed.
inline std::vector<ModelParams> sample_params(const UncertaintyModel& model, std::size_t n) {
    if (n < 1) throw InvalidInput("sample count must be >= 1");
    const double sd = model.effective_std();
    std::vector<ModelParams> out(n, model.nominal);
    if (sd == 0.0) return out;

    std::mt19937_64 rng(model.seed);
    std::normal_distribution<double> nu(0.0, sd);
    for (auto& p : out) {
        for (const auto& f : ModelParams::uncertain_fields) {
            double factor = 0.0;
            do {
                factor = 1.0 + nu(rng);
            } while (!(factor > model.truncation));
            p.*(f.member) = factor * (model.nominal.*(f.member));
        }
    }
    return out;
}

inline std::vector<PsiVector> psi_samples(const std::vector<ModelParams>& params) {
    std::vector<PsiVector> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(psi_vector(p));
    return out;
}

/// Weighted cluster centers standing in for the Psi distribution.
struct ClusterSet {
    std::vector<PsiVector> centers;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return centers.size(); }

    void validate() const {
        if (centers.empty()) throw InvalidInput("cluster set is empty");
        if (centers.size() != weights.size()) throw InvalidInput("cluster centers and weights differ in length");
        double total = 0.0;
        for (double w : weights) {
            if (!(w > 0.0 && w <= 1.0)) throw InvalidInput("cluster weight outside (0,1]");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("cluster weights do not sum to 1");
    }
};

struct KMeansOptions {
    int max_iterations = 300;
    double relative_tolerance = 1e-6;
};

struct KMeansResult {
    ClusterSet clusters;
    std::vector<double> sse_history; // standardized-space SSE after each assignment
    int iterations = 0;
    std::size_t requested = 0;
    std::size_t distinct_samples = 0;
    std::string warning;
};

namespace detail {

struct WeightedPoint {
    PsiVector original;
    PsiVector scaled;
    double multiplicity = 0.0;
};

inline bool lex_less(const PsiVector& a, const PsiVector& b) {
    for (int i = 0; i < kPsiSize; ++i) {
        if (a[i] < b[i]) return true;
        if (b[i] < a[i]) return false;
    }
    return false;
}

/// Mean of `members` computed as ref + sum(m (x - ref)) / sum(m), so that
/// identical members reproduce their value bit for bit.
template <class Get>
PsiVector stable_mean(const std::vector<std::size_t>& members, const std::vector<WeightedPoint>& pts, Get get) {
    const PsiVector& ref = get(pts[members.front()]);
    PsiVector acc = PsiVector::Zero();
    double total = 0.0;
    for (std::size_t idx : members) {
        acc += pts[idx].multiplicity * (get(pts[idx]) - ref);
        total += pts[idx].multiplicity;
    }
    return ref + acc / total;
}

} // namespace detail

/// Lloyd's k-means with k-means++ seeding on per-dimension standardized Psi
/// coordinates. Identical samples are merged first; centers are reported in
/// original coordinates and weights are cluster shares of the sample.
inline KMeansResult kmeans_psi(const std::vector<PsiVector>& samples, std::size_t n_cl, std::uint64_t seed,
                               const KMeansOptions& opts = {}) {
    if (samples.empty()) throw InvalidInput("no samples to cluster");
    if (n_cl < 1) throw InvalidInput("cluster count must be >= 1");
    for (const auto& s : samples)
        if (!s.allFinite()) throw InvalidInput("non-finite Psi sample");

    const double n_total = static_cast<double>(samples.size());

    // Per-dimension scale over the full sample.
    PsiVector mean = PsiVector::Zero();
    for (const auto& s : samples) mean += s;
    mean /= n_total;
    PsiVector scale = PsiVector::Ones();
    for (int d = 0; d < kPsiSize; ++d) {
        double var = 0.0;
        for (const auto& s : samples) var += (s[d] - mean[d]) * (s[d] - mean[d]);
        var /= n_total;
        if (var > 0.0) scale[d] = 1.0 / std::sqrt(var);
    }

    // Merge duplicates.
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return detail::lex_less(samples[i], samples[j]); });
    std::vector<detail::WeightedPoint> pts;
    for (std::size_t idx : order) {
        if (!pts.empty() && pts.back().original == samples[idx]) {
            pts.back().multiplicity += 1.0;
        } else {
            pts.push_back({samples[idx], samples[idx].cwiseProduct(scale), 1.0});
        }
    }

    KMeansResult result;
    result.requested = n_cl;
    result.distinct_samples = pts.size();
    std::size_t k = n_cl;
    if (k > pts.size()) {
        k = pts.size();
        std::ostringstream msg;
        msg << "requested " << n_cl << " clusters but only " << pts.size()
            << " distinct samples exist; using " << k;
        result.warning = msg.str();
    }

    // k-means++ seeding.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto pick = [&](const std::vector<double>& mass) {
        const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        double target = unit(rng) * total;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            if (mass[i] <= 0.0) continue;
            last_positive = i;
            if (target < mass[i]) return i;
            target -= mass[i];
        }
        return last_positive;
    };

    std::vector<PsiVector> centers;
    centers.reserve(k);
    {
        std::vector<double> mass(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) mass[i] = pts[i].multiplicity;
        centers.push_back(pts[pick(mass)].scaled);
        std::vector<double> best(pts.size(), std::numeric_limits<double>::infinity());
        while (centers.size() < k) {
            for (std::size_t i = 0; i < pts.size(); ++i) {
                best[i] = std::min(best[i], (pts[i].scaled - centers.back()).squaredNorm());
                mass[i] = pts[i].multiplicity * best[i];
            }
            centers.push_back(pts[pick(mass)].scaled);
        }
    }

    // Lloyd iterations.
    std::vector<std::size_t> assignment(pts.size(), k);
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        bool changed = false;
        double sse = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            std::size_t arg = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double d = (pts[i].scaled - centers[c]).squaredNorm();
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            if (assignment[i] != arg) changed = true;
            assignment[i] = arg;
            sse += pts[i].multiplicity * best;
        }
        result.sse_history.push_back(sse);
        result.iterations = iter + 1;

        std::vector<std::vector<std::size_t>> members(centers.size());
        for (std::size_t i = 0; i < pts.size(); ++i) members[assignment[i]].push_back(i);
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (!members[c].empty())
                centers[c] = detail::stable_mean(members[c], pts, [](const auto& p) -> const PsiVector& { return p.scaled; });
        }

        if (!changed) break;
        const std::size_t h = result.sse_history.size();
        if (h >= 2) {
            const double prev = result.sse_history[h - 2];
            if (prev - sse <= opts.relative_tolerance * prev) break;
        }
    }

    // Centers in original coordinates from the final assignment; empty clusters dropped.
    std::vector<std::vector<std::size_t>> members(centers.size());
    for (std::size_t i = 0; i < pts.size(); ++i) members[assignment[i]].push_back(i);
    for (const auto& m : members) {
        if (m.empty()) continue;
        double count = 0.0;
        for (std::size_t idx : m) count += pts[idx].multiplicity;
        result.clusters.centers.push_back(
            detail::stable_mean(m, pts, [](const auto& p) -> const PsiVector& { return p.original; }));
        result.clusters.weights.push_back(count / n_total);
    }
    return result;
}

inline ClusterSet cluster_psi(const std::vector<PsiVector>& samples, std::size_t n_cl, std::uint64_t seed) {
    return kmeans_psi(samples, n_cl, seed).clusters;
}

/// CSV with columns psi0..psi13,weight.
inline std::string clusters_to_csv(const ClusterSet& set) {
    std::ostringstream out;
    for (int i = 0; i < kPsiSize; ++i) out << "psi" << i << ',';
    out << "weight\n";
    for (std::size_t j = 0; j < set.size(); ++j) {
        for (int i = 0; i < kPsiSize; ++i) out << csv::format_double(set.centers[j][i]) << ',';
        out << csv::format_double(set.weights[j]) << '\n';
    }
    return out.str();
}

inline ClusterSet read_clusters_csv(const std::string& path) {
    const auto table = csv::read(path);
    ClusterSet set;
    const std::size_t wcol = table.column("weight");
    for (const auto& row : table.rows) {
        PsiVector c;
        for (int i = 0; i < kPsiSize; ++i) c[i] = csv::parse_double(row[table.column("psi" + std::to_string(i))]);
        set.centers.push_back(c);
        set.weights.push_back(csv::parse_double(row[wcol]));
    }
    set.validate();
    return set;
}

} // namespace sdpchemo
