#pragma once

// Tumor / immune / chemotherapy dynamics, their forward-Euler discretization
// in separable form x+ = Phi(x,u) * Psi(p), state normalization and the
// stage cost.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "sdpchemo/errors.hpp"

namespace sdpchemo {

/// Rate constants of the four-compartment model, raw biological units.
/// `h` is treated as known; the other 13 fields are the uncertain vector p.
struct ModelParams {
    double a = 0.25;       // 1/day
    double b = 1.02e-14;   // 1/cells
    double c1 = 4.41e-10;  // 1/(cells day)
    double g = 1.5e-2;     // 1/day
    double h = 20.2;       // cells
    double k1 = 0.8;       // 1/day per unit chemo
    double k2 = 0.6;
    double k3 = 0.6;
    double p0 = 2e-11;     // 1/(cells day)
    double r = 0.04;       // 1/day
    double s1 = 1.2e7;     // cells/day per unit u1
    double s2 = 7.5e6;     // cells/day
    double delta = 1.2e-2; // 1/day
    double gamma0 = 0.9;   // 1/day

    static constexpr ModelParams nominal() { return {}; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

    struct Field {
        std::string_view name;
        double ModelParams::*member;
    };

    /// The uncertain parameters in sampling order (h excluded).
    static constexpr std::array<Field, 13> uncertain_fields{{
        {"a", &ModelParams::a},
        {"b", &ModelParams::b},
        {"c1", &ModelParams::c1},
        {"g", &ModelParams::g},
        {"k1", &ModelParams::k1},
        {"k2", &ModelParams::k2},
        {"k3", &ModelParams::k3},
        {"p0", &ModelParams::p0},
        {"r", &ModelParams::r},
        {"s1", &ModelParams::s1},
        {"s2", &ModelParams::s2},
        {"delta", &ModelParams::delta},
        {"gamma0", &ModelParams::gamma0},
    }};

    void validate() const {
        if (!(std::isfinite(h) && h > 0.0)) throw InvalidInput("model parameter h must be finite and > 0");
        for (const auto& f : uncertain_fields) {
            const double v = this->*(f.member);
            if (!(std::isfinite(v) && v > 0.0))
                throw InvalidInput("model parameter " + std::string(f.name) + " must be finite and > 0");
        }
    }
};

template <class Tag>
struct BasicState {
    std::array<double, 4> v{};

    constexpr double& operator[](std::size_t i) { return v[i]; }
    constexpr double operator[](std::size_t i) const { return v[i]; }

    friend bool operator==(const BasicState&, const BasicState&) = default;
};

struct RawTag {};
struct NormalizedTag {};

/// Cells / concentration in biological units: (tumor, lymphocytes, chemo, effector).
using RawState = BasicState<RawTag>;
/// State scaled by the reference values (1e9, 1e9, 1, 1e9).
using NormalizedState = BasicState<NormalizedTag>;

inline constexpr std::array<double, 4> kReferenceScale{1e9, 1e9, 1.0, 1e9};

inline NormalizedState normalize(const RawState& x) {
    NormalizedState n;
    for (std::size_t i = 0; i < 4; ++i) n[i] = x[i] / kReferenceScale[i];
    return n;
}

inline RawState denormalize(const NormalizedState& n) {
    RawState x;
    for (std::size_t i = 0; i < 4; ++i) x[i] = n[i] * kReferenceScale[i];
    return x;
}

/// One control input: immune-cell rate u1 and chemotherapy rate u2.
struct Dose {
    double u1 = 0.0;
    double u2 = 0.0;
    friend bool operator==(const Dose&, const Dose&) = default;
};

inline constexpr std::size_t kDoseCount = 4;

/// The quantized admissible set {0,u1_max} x {0,u2_max}.
struct DoseSet {
    double u1_max = 1.0;
    double u2_max = 1.0;

    friend bool operator==(const DoseSet&, const DoseSet&) = default;

    void validate() const {
        if (!(std::isfinite(u1_max) && u1_max > 0.0)) throw InvalidInput("u1_max must be finite and > 0");
        if (!(std::isfinite(u2_max) && u2_max > 0.0)) throw InvalidInput("u2_max must be finite and > 0");
    }

    /// Fixed order: (0,0), (0,u2max), (u1max,0), (u1max,u2max).
    [[nodiscard]] std::array<Dose, kDoseCount> doses() const {
        return {Dose{0.0, 0.0}, Dose{0.0, u2_max}, Dose{u1_max, 0.0}, Dose{u1_max, u2_max}};
    }

    [[nodiscard]] Dose at(std::size_t index) const { return doses().at(index); }

    /// Dose as the pair (u1/u1_max, u2/u2_max) in {0,1}^2 used for regression.
    [[nodiscard]] std::array<double, 2> encode(const Dose& u) const { return {u.u1 / u1_max, u.u2 / u2_max}; }

    [[nodiscard]] bool contains(const Dose& u) const {
        return (u.u1 == 0.0 || u.u1 == u1_max) && (u.u2 == 0.0 || u.u2 == u2_max);
    }
};

struct CostParams {
    double rho_c = 10.0;
    double rho_1 = 0.01;
    double rho_2 = 0.01;
    double x2_min = 0.05; // normalized lymphocyte floor

    friend bool operator==(const CostParams&, const CostParams&) = default;

    void validate() const {
        if (!(rho_c >= 0.0 && std::isfinite(rho_c))) throw InvalidInput("rho_c must be >= 0");
        if (!(rho_1 >= 0.0 && std::isfinite(rho_1))) throw InvalidInput("rho_1 must be >= 0");
        if (!(rho_2 >= 0.0 && std::isfinite(rho_2))) throw InvalidInput("rho_2 must be >= 0");
        if (!(x2_min > 0.0 && x2_min < 1.0)) throw InvalidInput("x2_min must lie in (0,1)");
    }
};

inline constexpr int kPsiSize = 14;

using PsiVector = Eigen::Matrix<double, kPsiSize, 1>;
using PhiMatrix = Eigen::Matrix<double, 4, kPsiSize, Eigen::RowMajor>;

/// Column layout shared by PhiMatrix and PsiVector.
namespace psi {
inline constexpr int kConst = 0;
inline constexpr int kA = 1;
inline constexpr int kAB = 2;
inline constexpr int kC1 = 3;
inline constexpr int kK3 = 4;
inline constexpr int kDelta = 5;
inline constexpr int kK2 = 6;
inline constexpr int kS2 = 7;
inline constexpr int kGamma0 = 8;
inline constexpr int kG = 9;
inline constexpr int kR = 10;
inline constexpr int kP0 = 11;
inline constexpr int kK1 = 12;
inline constexpr int kS1 = 13;
} // namespace psi

namespace detail {

inline void require_state(const RawState& x) {
    for (double c : x.v) {
        if (!std::isfinite(c)) throw InvalidInput("state component is not finite");
        if (c < 0.0) throw InvalidInput("state component is negative");
    }
}

inline void require_dose(const Dose& u) {
    if (!std::isfinite(u.u1) || !std::isfinite(u.u2)) throw InvalidInput("dose is not finite");
}

} // namespace detail

/// Right-hand side of the continuous-time model in raw units per day.
inline std::array<double, 4> continuous_rhs(const RawState& x, const Dose& u, const ModelParams& p) {
    detail::require_state(x);
    detail::require_dose(u);
    const double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3];
    return {
        p.a * x1 * (1.0 - p.b * x1) - p.c1 * x4 * x1 - p.k3 * x3 * x1,
        -p.delta * x2 - p.k2 * x3 * x2 + p.s2,
        -p.gamma0 * x3 + u.u2,
        p.g * x1 / (p.h + x1) * x4 - p.r * x4 - p.p0 * x4 * x1 - p.k1 * x4 * x3 + p.s1 * u.u1,
    };
}

inline PsiVector psi_vector(const ModelParams& p) {
    PsiVector v;
    v << 1.0, p.a, p.a * p.b, p.c1, p.k3, p.delta, p.k2, p.s2, p.gamma0, p.g, p.r, p.p0, p.k1, p.s1;
    return v;
}

/// State/control basis of one Euler step; depends on the parameters only through h.
inline PhiMatrix phi_matrix(const RawState& x, const Dose& u, double tau, double h) {
    using namespace psi;
    const double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3];
    PhiMatrix m = PhiMatrix::Zero();

    m(0, kConst) = x1;
    m(0, kA) = tau * x1;
    m(0, kAB) = -tau * x1 * x1;
    m(0, kC1) = -tau * x4 * x1;
    m(0, kK3) = -tau * x3 * x1;

    m(1, kConst) = x2;
    m(1, kDelta) = -tau * x2;
    m(1, kK2) = -tau * x3 * x2;
    m(1, kS2) = tau;

    m(2, kConst) = x3 + tau * u.u2;
    m(2, kGamma0) = -tau * x3;

    m(3, kConst) = x4;
    m(3, kG) = tau * x4 * x1 / (h + x1);
    m(3, kR) = -tau * x4;
    m(3, kP0) = -tau * x4 * x1;
    m(3, kK1) = -tau * x4 * x3;
    m(3, kS1) = tau * u.u1;
    return m;
}

inline RawState clamp_nonneg(RawState x) {
    for (double& c : x.v) c = std::max(c, 0.0);
    return x;
}

/// Phi * Psi followed by the nonnegativity clamp.
inline RawState apply_step(const PhiMatrix& phi, const PsiVector& psi) {
    const Eigen::Vector4d next = phi * psi;
    RawState x{{next[0], next[1], next[2], next[3]}};
    for (double c : x.v)
        if (!std::isfinite(c)) throw NumericalOverflow("non-finite state after step");
    return clamp_nonneg(x);
}

inline RawState euler_step(const RawState& x, const Dose& u, const ModelParams& p, double tau) {
    if (!(tau >= 0.0 && std::isfinite(tau))) throw InvalidInput("tau must be finite and >= 0");
    const auto dx = continuous_rhs(x, u, p);
    RawState next;
    for (std::size_t i = 0; i < 4; ++i) {
        next[i] = x[i] + tau * dx[i];
        if (!std::isfinite(next[i])) throw NumericalOverflow("non-finite state after Euler step");
    }
    return clamp_nonneg(next);
}

/// Normalized successor of normalized `x` under dose `u` for one Psi vector.
inline NormalizedState next_normalized(const NormalizedState& x, const Dose& u, const PsiVector& psi, double tau,
                                       double h) {
    return normalize(apply_step(phi_matrix(denormalize(x), u, tau, h), psi));
}

/// L(x,u) = x1^2 + rho_c max(0, x2_min - x2) + rho_1 u1 + rho_2 u2 on normalized x.
inline double stage_cost(const NormalizedState& x, const Dose& u, const CostParams& c) {
    return x[0] * x[0] + c.rho_c * std::max(0.0, c.x2_min - x[1]) + c.rho_1 * u.u1 + c.rho_2 * u.u2;
}

} // namespace sdpchemo
