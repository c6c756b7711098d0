#pragma once

// Gaussian-kernel ridge regression over the (state, dose) grid:
//   Q(z) = beta0 + sum_i beta_i exp(-bandwidth * |z_i - z|^2)
// with beta0 = mean(q) and (K + lambda I) beta = q - beta0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sdpchemo/csv.hpp"
#include "sdpchemo/errors.hpp"
#include "sdpchemo/grid.hpp"
#include "sdpchemo/model.hpp"
#include "sdpchemo/uncertainty.hpp"

namespace sdpchemo {

inline double squared_distance(const Feature& a, const Feature& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < kFeatureSize; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

inline double gaussian_kernel(const Feature& a, const Feature& b, double bandwidth) {
    return std::exp(-bandwidth * squared_distance(a, b));
}

struct KernelModel {
    std::vector<Feature> centers;
    std::vector<double> beta;
    double intercept = 0.0;
    double bandwidth = 1.0;
    double lambda = 1e-3;

    // Populated by index_structure() when centers[s*4 + d] = state_s (+) dose_d.
    // Lets predict_doses() evaluate one state kernel per grid state instead of
    // one full kernel per center.
    std::vector<std::array<double, 4>> state_centers;
    std::vector<std::array<double, kDoseCount>> dose_mixed; // sum_d beta_{s,d} k_dose(d, v)
    std::array<std::array<double, 2>, kDoseCount> dose_codes{};
    // Set when the state centers are a full tensor grid, x1 varying slowest.
    // The state kernel then factorizes per coordinate.
    std::vector<double> tensor_levels;

    [[nodiscard]] bool has_product_structure() const { return !state_centers.empty(); }
    [[nodiscard]] bool has_tensor_structure() const { return !tensor_levels.empty(); }

    void index_structure() {
        state_centers.clear();
        dose_mixed.clear();
        tensor_levels.clear();
        const std::size_t n = centers.size();
        if (n == 0 || n % kDoseCount != 0) return;
        for (std::size_t d = 0; d < kDoseCount; ++d) dose_codes[d] = {centers[d][4], centers[d][5]};
        for (std::size_t a = 0; a < kDoseCount; ++a)
            for (std::size_t b = a + 1; b < kDoseCount; ++b)
                if (dose_codes[a] == dose_codes[b]) return;
        const std::size_t ns = n / kDoseCount;
        std::vector<std::array<double, 4>> states(ns);
        for (std::size_t s = 0; s < ns; ++s) {
            const Feature& head = centers[s * kDoseCount];
            states[s] = {head[0], head[1], head[2], head[3]};
            for (std::size_t d = 0; d < kDoseCount; ++d) {
                const Feature& c = centers[s * kDoseCount + d];
                if (c[0] != head[0] || c[1] != head[1] || c[2] != head[2] || c[3] != head[3]) return;
                if (c[4] != dose_codes[d][0] || c[5] != dose_codes[d][1]) return;
            }
        }
        std::array<std::array<double, kDoseCount>, kDoseCount> kd{};
        for (std::size_t d = 0; d < kDoseCount; ++d)
            for (std::size_t v = 0; v < kDoseCount; ++v) {
                const double e0 = dose_codes[d][0] - dose_codes[v][0];
                const double e1 = dose_codes[d][1] - dose_codes[v][1];
                kd[d][v] = std::exp(-bandwidth * (e0 * e0 + e1 * e1));
            }
        dose_mixed.assign(ns, {});
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t v = 0; v < kDoseCount; ++v) {
                double acc = 0.0;
                for (std::size_t d = 0; d < kDoseCount; ++d) acc += beta[s * kDoseCount + d] * kd[d][v];
                dose_mixed[s][v] = acc;
            }
        state_centers = std::move(states);
        index_tensor();
    }

private:
    void index_tensor() {
        const std::size_t ns = state_centers.size();
        std::size_t r = 1;
        while (r * r * r * r < ns) ++r;
        if (r < 2 || r * r * r * r != ns) return;
        std::vector<double> levels(r);
        for (std::size_t l = 0; l < r; ++l) levels[l] = state_centers[l][3];
        for (std::size_t l = 1; l < r; ++l)
            if (!(levels[l] > levels[l - 1])) return;
        for (std::size_t s = 0; s < ns; ++s) {
            std::size_t rest = s;
            for (std::size_t k = 4; k-- > 0;) {
                if (state_centers[s][k] != levels[rest % r]) return;
                rest /= r;
            }
        }
        tensor_levels = std::move(levels);
    }
};

/// Value at an arbitrary 6-d point; extrapolation decays to the intercept.
inline double predict(const KernelModel& model, const Feature& z) {
    double acc = 0.0;
    for (std::size_t i = 0; i < model.centers.size(); ++i)
        acc += model.beta[i] * gaussian_kernel(model.centers[i], z, model.bandwidth);
    return model.intercept + acc;
}

/// Predictions at state `x` for the four doses, in dose-set order.
inline std::array<double, kDoseCount> predict_doses(const KernelModel& model, const NormalizedState& x,
                                                    const DoseSet& doses) {
    std::array<double, kDoseCount> out{};
    if (model.has_tensor_structure()) {
        // Contract the last coordinate first: r^4 -> r^3 -> r^2 -> r -> 1.
        const auto& lv = model.tensor_levels;
        const std::size_t r = lv.size();
        thread_local std::vector<double> factor, buf_a, buf_b;
        factor.resize(4 * r);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t l = 0; l < r; ++l) {
                const double d = lv[l] - x[k];
                factor[k * r + l] = std::exp(-model.bandwidth * d * d);
            }
        std::size_t rows = r * r * r;
        buf_a.assign(rows * kDoseCount, 0.0);
        const double* f3 = &factor[3 * r];
        for (std::size_t i = 0; i < rows; ++i) {
            double* dst = &buf_a[i * kDoseCount];
            for (std::size_t l = 0; l < r; ++l) {
                const auto& w = model.dose_mixed[i * r + l];
                for (std::size_t v = 0; v < kDoseCount; ++v) dst[v] += f3[l] * w[v];
            }
        }
        for (std::size_t k = 3; k-- > 0;) {
            const double* fk = &factor[k * r];
            rows /= r;
            buf_b.assign(rows * kDoseCount, 0.0);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t l = 0; l < r; ++l)
                    for (std::size_t v = 0; v < kDoseCount; ++v)
                        buf_b[i * kDoseCount + v] += fk[l] * buf_a[(i * r + l) * kDoseCount + v];
            std::swap(buf_a, buf_b);
        }
        for (std::size_t v = 0; v < kDoseCount; ++v) out[v] = model.intercept + buf_a[v];
        return out;
    }
    if (model.has_product_structure()) {
        std::array<double, kDoseCount> acc{};
        for (std::size_t s = 0; s < model.state_centers.size(); ++s) {
            const auto& c = model.state_centers[s];
            double d2 = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                const double d = c[k] - x[k];
                d2 += d * d;
            }
            const double ks = std::exp(-model.bandwidth * d2);
            const auto& w = model.dose_mixed[s];
            for (std::size_t v = 0; v < kDoseCount; ++v) acc[v] += ks * w[v];
        }
        for (std::size_t v = 0; v < kDoseCount; ++v) out[v] = model.intercept + acc[v];
        return out;
    }
    const auto list = doses.doses();
    for (std::size_t v = 0; v < kDoseCount; ++v) out[v] = predict(model, make_feature(x, list[v], doses));
    return out;
}

/// Median heuristic: 1 / (6 median^2) over pairwise distances of an evenly
/// strided subsample of at most `subsample` points.
inline double median_heuristic_bandwidth(const std::vector<Feature>& points, std::size_t subsample = 500) {
    if (points.size() < 2) return 1.0;
    const std::size_t m = std::min(subsample, points.size());
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i * points.size() / m;
    std::vector<double> dist;
    dist.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) dist.push_back(std::sqrt(squared_distance(points[idx[i]], points[idx[j]])));
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    const double med = *mid;
    if (!(med > 0.0)) return 1.0;
    return 1.0 / (static_cast<double>(kFeatureSize) * med * med);
}

/// Factorized (K + lambda I) for a fixed set of centers. The grid and the
/// hyperparameters stay fixed across value iterations, so one factorization
/// serves every fit.
class KernelRidge {
public:
    KernelRidge(std::vector<Feature> centers, double bandwidth, double lambda)
        : centers_(std::move(centers)), bandwidth_(bandwidth), lambda_(lambda) {
        if (centers_.empty()) throw InvalidInput("kernel ridge needs at least one center");
        if (!(bandwidth_ > 0.0 && std::isfinite(bandwidth_))) throw InvalidInput("bandwidth must be > 0");
        if (!(lambda_ >= 0.0 && std::isfinite(lambda_))) throw InvalidInput("ridge lambda must be >= 0");
        for (std::size_t i = 0; i < centers_.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (centers_[i] == centers_[j]) throw InvalidInput("duplicate regression center");
        const auto n = static_cast<Eigen::Index>(centers_.size());
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i, i) = 1.0 + lambda_;
            for (Eigen::Index j = 0; j < i; ++j) {
                const double v = gaussian_kernel(centers_[i], centers_[j], bandwidth_);
                k(i, j) = v;
                k(j, i) = v;
            }
        }
        llt_.compute(k);
        const double rcond = llt_.info() == Eigen::Success ? llt_.rcond() : 0.0;
        if (llt_.info() != Eigen::Success || !(rcond > std::numeric_limits<double>::epsilon())) {
            std::ostringstream msg;
            msg << "kernel system is singular: n=" << n << " bandwidth=" << bandwidth_ << " lambda=" << lambda_
                << " rcond~" << rcond;
            throw NumericalError(msg.str());
        }
        rcond_ = rcond;
    }

    [[nodiscard]] KernelModel fit(const std::vector<double>& q) const {
        if (q.size() != centers_.size()) throw InvalidInput("target count does not match center count");
        const auto n = static_cast<Eigen::Index>(q.size());
        Eigen::VectorXd y(n);
        double mean = 0.0;
        for (double v : q) {
            if (!std::isfinite(v)) throw InvalidInput("non-finite regression target");
            mean += v;
        }
        mean /= static_cast<double>(q.size());
        for (Eigen::Index i = 0; i < n; ++i) y[i] = q[static_cast<std::size_t>(i)] - mean;
        const Eigen::VectorXd sol = llt_.solve(y);
        if (!sol.allFinite()) throw NumericalError("kernel ridge solve produced non-finite coefficients");

        KernelModel m;
        m.centers = centers_;
        m.beta.assign(sol.data(), sol.data() + n);
        m.intercept = mean;
        m.bandwidth = bandwidth_;
        m.lambda = lambda_;
        m.index_structure();
        return m;
    }

    [[nodiscard]] const std::vector<Feature>& centers() const { return centers_; }
    [[nodiscard]] double bandwidth() const { return bandwidth_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] double rcond() const { return rcond_; }

private:
    std::vector<Feature> centers_;
    double bandwidth_;
    double lambda_;
    double rcond_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline KernelModel fit(const std::vector<Feature>& grid, const std::vector<double>& q, double bandwidth,
                       double lambda) {
    return KernelRidge(grid, bandwidth, lambda).fit(q);
}

/// Largest |Q(x+_j, v) - sum_k pi_k Q(x+_k, v)| over grid points, candidate
/// doses and clusters.
inline double excursion_bound(const KernelModel& model, const ClusterSet& clusters, const Grid& grid, double tau,
                              double h) {
    if (clusters.size() == 0) throw InvalidInput("excursion bound needs clusters");
    double bound = 0.0;
    std::vector<std::array<double, kDoseCount>> values(clusters.size());
    for (const auto& pt : grid.points) {
        for (std::size_t j = 0; j < clusters.size(); ++j)
            values[j] = predict_doses(model, next_normalized(pt.x, pt.u, clusters.centers[j], tau, h), grid.doses);
        for (std::size_t v = 0; v < kDoseCount; ++v) {
            double mu = 0.0;
            for (std::size_t j = 0; j < clusters.size(); ++j) mu += clusters.weights[j] * values[j][v];
            for (std::size_t j = 0; j < clusters.size(); ++j) bound = std::max(bound, std::abs(values[j][v] - mu));
        }
    }
    return bound;
}

/// Rows: intercept / bandwidth / lambda parameters, then one row per center.
inline std::string model_to_csv(const KernelModel& m) {
    std::ostringstream out;
    out << "kind,x1,x2,x3,x4,e1,e2,value\n";
    out << "intercept,,,,,,," << csv::format_double(m.intercept) << '\n';
    out << "bandwidth,,,,,,," << csv::format_double(m.bandwidth) << '\n';
    out << "lambda,,,,,,," << csv::format_double(m.lambda) << '\n';
    for (std::size_t i = 0; i < m.centers.size(); ++i) {
        out << "center";
        for (double c : m.centers[i]) out << ',' << csv::format_double(c);
        out << ',' << csv::format_double(m.beta[i]) << '\n';
    }
    return out.str();
}

inline KernelModel read_model_csv(const std::string& path) {
    const auto t = csv::read(path);
    const std::size_t kind = t.column("kind");
    const std::size_t value = t.column("value");
    const std::array<const char*, kFeatureSize> names{"x1", "x2", "x3", "x4", "e1", "e2"};
    KernelModel m;
    for (const auto& row : t.rows) {
        const double v = csv::parse_double(row[value]);
        if (row[kind] == "intercept") {
            m.intercept = v;
        } else if (row[kind] == "bandwidth") {
            m.bandwidth = v;
        } else if (row[kind] == "lambda") {
            m.lambda = v;
        } else if (row[kind] == "center") {
            Feature f{};
            for (std::size_t k = 0; k < kFeatureSize; ++k) f[k] = csv::parse_double(row[t.column(names[k])]);
            m.centers.push_back(f);
            m.beta.push_back(v);
        } else {
            throw IoError("unknown row kind '" + row[kind] + "' in " + path);
        }
    }
    if (m.centers.empty()) throw IoError("model file has no centers: " + path);
    m.index_structure();
    return m;
}

} // namespace sdpchemo
