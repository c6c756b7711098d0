#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sdpchemo/model.hpp"

using namespace sdpchemo;

namespace {

const ModelParams kNominal = ModelParams::nominal();

ModelParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> factor(0.5, 1.5);
    ModelParams p = kNominal;
    for (const auto& f : ModelParams::uncertain_fields) p.*(f.member) *= factor(rng);
    return p;
}

RawState random_raw_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return denormalize(NormalizedState{{unit(rng), unit(rng), unit(rng), unit(rng)}});
}

} // namespace

TEST(ModelParams, NominalValues) {
    const auto p = ModelParams::nominal();
    EXPECT_EQ(p.a, 0.25);
    EXPECT_EQ(p.b, 1.02e-14);
    EXPECT_EQ(p.c1, 4.41e-10);
    EXPECT_EQ(p.g, 1.5e-2);
    EXPECT_EQ(p.h, 20.2);
    EXPECT_EQ(p.k1, 0.8);
    EXPECT_EQ(p.k2, 0.6);
    EXPECT_EQ(p.k3, 0.6);
    EXPECT_EQ(p.p0, 2e-11);
    EXPECT_EQ(p.r, 0.04);
    EXPECT_EQ(p.s1, 1.2e7);
    EXPECT_EQ(p.s2, 7.5e6);
    EXPECT_EQ(p.delta, 1.2e-2);
    EXPECT_EQ(p.gamma0, 0.9);
    EXPECT_NO_THROW(p.validate());
}

TEST(ModelParams, RejectsNonPositive) {
    ModelParams p;
    p.k2 = 0.0;
    EXPECT_THROW(p.validate(), InvalidInput);
    p = ModelParams{};
    p.h = -1.0;
    EXPECT_THROW(p.validate(), InvalidInput);
}

TEST(ContinuousRhs, HandEvaluations) {
    const auto d0 = continuous_rhs(RawState{{0, 0, 0, 0}}, Dose{0, 0}, kNominal);
    EXPECT_EQ(d0[0], 0.0);
    EXPECT_EQ(d0[1], 7.5e6);
    EXPECT_EQ(d0[2], 0.0);
    EXPECT_EQ(d0[3], 0.0);

    const auto d1 = continuous_rhs(RawState{{0, 0, 1, 0}}, Dose{0, 0}, kNominal);
    EXPECT_EQ(d1[1], 7.5e6);
    EXPECT_DOUBLE_EQ(d1[2], -0.9);
    EXPECT_EQ(d1[3], 0.0);

    // 0.25 * 1e9 * (1 - 1.02e-14 * 1e9) = 2.5e8 * 0.9999898
    const auto d2 = continuous_rhs(RawState{{1e9, 0, 0, 0}}, Dose{0, 0}, kNominal);
    EXPECT_NEAR(d2[0], 2.4999745e8, 1e-6);
    EXPECT_EQ(d2[3], 0.0);
}

TEST(ContinuousRhs, SaturatingStimulationTerm) {
    // x4 row with only the g term active: g x1/(h+x1) x4 - r x4 - p0 x4 x1
    const RawState x{{20.2, 0, 0, 1.0}};
    const auto d = continuous_rhs(x, Dose{0, 0}, kNominal);
    const double expected = 1.5e-2 * 0.5 - 0.04 - 2e-11 * 20.2;
    EXPECT_NEAR(d[3], expected, 1e-15);
}

TEST(ContinuousRhs, RejectsNonFinite) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(continuous_rhs(RawState{{nan, 0, 0, 0}}, Dose{}, kNominal), InvalidInput);
    EXPECT_THROW(continuous_rhs(RawState{{0, 0, 0, 0}}, Dose{std::numeric_limits<double>::infinity(), 0}, kNominal),
                 InvalidInput);
}

TEST(PsiVector, OrderingAndScaling) {
    const auto v = psi_vector(kNominal);
    EXPECT_EQ(v[0], 1.0);
    EXPECT_EQ(v[psi::kA], 0.25);
    EXPECT_DOUBLE_EQ(v[psi::kAB], 2.55e-15);
    EXPECT_EQ(v[psi::kS1], 1.2e7);
    EXPECT_EQ(v[psi::kGamma0], 0.9);

    ModelParams doubled = kNominal;
    doubled.a *= 2.0;
    const auto w = psi_vector(doubled);
    EXPECT_DOUBLE_EQ(w[psi::kA], 2.0 * v[psi::kA]);
    EXPECT_DOUBLE_EQ(w[psi::kAB], 2.0 * v[psi::kAB]);
    for (int i = 0; i < kPsiSize; ++i)
        if (i != psi::kA && i != psi::kAB) {
            EXPECT_EQ(w[i], v[i]) << "entry " << i;
        }
}

TEST(PsiVector, PositiveEntries) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const auto v = psi_vector(random_params(rng));
        EXPECT_EQ(v[0], 1.0);
        for (int i = 1; i < kPsiSize; ++i) EXPECT_GT(v[i], 0.0);
    }
}

TEST(PhiMatrix, ZeroStateChemoDose) {
    const auto m = phi_matrix(RawState{{0, 0, 0, 0}}, Dose{0, 1}, 0.25, kNominal.h);
    EXPECT_EQ(m(2, psi::kConst), 0.25);
    EXPECT_EQ(m(1, psi::kS2), 0.25);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < kPsiSize; ++c) {
            if ((r == 2 && c == psi::kConst) || (r == 1 && c == psi::kS2)) continue;
            EXPECT_EQ(m(r, c), 0.0) << r << "," << c;
        }
}

TEST(PhiMatrix, ZeroStepIsIdentity) {
    const RawState x{{1e9, 1e9, 1, 1e9}};
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const Eigen::Vector4d next = phi_matrix(x, Dose{0, 0}, 0.0, kNominal.h) * psi_vector(random_params(rng));
        for (int i = 0; i < 4; ++i) EXPECT_EQ(next[i], x[i]);
    }
}

TEST(PhiMatrix, FactorizationMatchesEuler) {
    std::mt19937_64 rng(11);
    const DoseSet doses;
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto p = random_params(rng);
        const auto x = random_raw_state(rng);
        const Dose u = doses.at(static_cast<std::size_t>(t % 4));
        const auto dx = continuous_rhs(x, u, p);
        bool clamp_active = false;
        for (int i = 0; i < 4; ++i) clamp_active |= x[i] + 0.25 * dx[i] < 0.0;
        if (clamp_active) continue;
        const auto euler = euler_step(x, u, p, 0.25);
        const Eigen::Vector4d factored = phi_matrix(x, u, 0.25, p.h) * psi_vector(p);
        for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(factored[i] - euler[i]), 1e-10 * (1.0 + std::abs(euler[i])));
        ++checked;
    }
    EXPECT_GT(checked, 900);
}

TEST(PhiMatrix, IndependentOfParametersExceptH) {
    const RawState x{{5e8, 3e8, 0.4, 2e8}};
    const auto a = phi_matrix(x, Dose{1, 0}, 0.25, 20.2);
    const auto b = phi_matrix(x, Dose{1, 0}, 0.25, 40.4);
    EXPECT_EQ(a(0, psi::kA), b(0, psi::kA));
    EXPECT_NE(a(3, psi::kG), b(3, psi::kG));
}

TEST(EulerStep, HandEvaluations) {
    const auto a = euler_step(RawState{{0, 0, 0, 0}}, Dose{0, 1}, kNominal, 0.25);
    EXPECT_EQ(a[0], 0.0);
    EXPECT_EQ(a[1], 1.875e6);
    EXPECT_EQ(a[2], 0.25);
    EXPECT_EQ(a[3], 0.0);

    const auto b = euler_step(RawState{{0, 0, 1, 0}}, Dose{0, 0}, kNominal, 0.25);
    EXPECT_DOUBLE_EQ(b[2], 0.775);

    const RawState x{{3e8, 2e8, 0.7, 4e8}};
    EXPECT_EQ(euler_step(x, Dose{1, 1}, kNominal, 0.0), x);
}

TEST(EulerStep, ClampsToNonnegativeOrthant) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        const auto x = random_raw_state(rng);
        // Long steps overshoot below zero.
        const auto next = euler_step(x, Dose{0, 0}, random_params(rng), 5.0 * unit(rng) + 0.25);
        for (double c : next.v) EXPECT_GE(c, 0.0);
    }
    const auto next = euler_step(RawState{{0, 0, 1, 0}}, Dose{0, 0}, kNominal, 10.0);
    EXPECT_EQ(next[2], 0.0);
}

TEST(EulerStep, OverflowIsReported) {
    EXPECT_THROW(euler_step(RawState{{1e300, 0, 0, 0}}, Dose{0, 0}, kNominal, 0.25), NumericalOverflow);
}

TEST(Normalization, ReferenceScale) {
    const auto n = normalize(RawState{{1e9, 1e9, 1, 1e9}});
    for (double c : n.v) EXPECT_EQ(c, 1.0);
    const auto z = normalize(RawState{{0, 0, 0, 0}});
    for (double c : z.v) EXPECT_EQ(c, 0.0);
}

TEST(Normalization, Roundtrip) {
    for (const RawState x : {RawState{{1e9, 5e8, 0.25, 2.5e8}}, RawState{{123456789, 7.5e6, 1.875, 1.2e7}},
                             RawState{{0, 1e10, 3, 4e9}}})
        EXPECT_EQ(denormalize(normalize(x)), x);
    // Arbitrary doubles roundtrip to within one ulp.
    std::mt19937_64 rng(23);
    for (int t = 0; t < 1000; ++t) {
        const auto x = random_raw_state(rng);
        const auto y = denormalize(normalize(x));
        for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(y[i] - x[i]), std::abs(x[i]) * 2.3e-16);
    }
}

TEST(StageCost, Examples) {
    const CostParams cost; // rho_c = 10, rho_1 = rho_2 = 0.01, x2_min = 0.05
    EXPECT_EQ(stage_cost(NormalizedState{{0, 0.5, 0, 0}}, Dose{0, 0}, cost), 0.0);
    EXPECT_EQ(stage_cost(NormalizedState{{0.5, 0.1, 0, 0}}, Dose{0, 0}, cost), 0.25);
    CostParams heavy = cost;
    heavy.rho_c = 1e6;
    EXPECT_EQ(stage_cost(NormalizedState{{0.5, 0.1, 0, 0}}, Dose{0, 0}, heavy), 0.25);
    EXPECT_NEAR(stage_cost(NormalizedState{{0.5, 0.02, 0, 0}}, Dose{1, 1}, cost), 0.57, 1e-15);
}

TEST(StageCost, NonnegativeAndMonotone) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const CostParams cost;
    const DoseSet doses;
    for (int t = 0; t < 1000; ++t) {
        NormalizedState x{{unit(rng), 0.1 * unit(rng), unit(rng), unit(rng)}};
        const Dose u = doses.at(static_cast<std::size_t>(t % 4));
        const double base = stage_cost(x, u, cost);
        EXPECT_GE(base, 0.0);
        NormalizedState bigger_tumor = x;
        bigger_tumor[0] += unit(rng);
        EXPECT_GE(stage_cost(bigger_tumor, u, cost), base);
        NormalizedState lower_x2 = x;
        lower_x2[1] = std::max(0.0, x[1] - 0.05 * unit(rng));
        EXPECT_GE(stage_cost(lower_x2, u, cost), base);
    }
}

TEST(DoseSet, FixedOrderAndEncoding) {
    const DoseSet d{2.0, 3.0};
    const auto list = d.doses();
    EXPECT_EQ(list[0], (Dose{0, 0}));
    EXPECT_EQ(list[1], (Dose{0, 3}));
    EXPECT_EQ(list[2], (Dose{2, 0}));
    EXPECT_EQ(list[3], (Dose{2, 3}));
    EXPECT_EQ(d.encode(list[3]), (std::array<double, 2>{1.0, 1.0}));
    EXPECT_TRUE(d.contains(list[2]));
    EXPECT_FALSE(d.contains(Dose{1, 0}));
}
