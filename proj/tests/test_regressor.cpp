#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sdpchemo/regressor.hpp"
#include "sdpchemo/solver.hpp"

using namespace sdpchemo;

namespace {

const Grid& small_grid() {
    static const Grid g = build_grid(2);
    return g;
}

std::vector<double> random_targets(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> q(n);
    for (double& v : q) v = u(rng);
    return q;
}

Feature random_feature(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    return {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
}

// Two well separated centers with dose code (0,0); predictions 2 and 4 at
// them for the first dose and the intercept 3 elsewhere.
KernelModel two_level_model() {
    KernelModel m;
    m.centers = {Feature{0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, Feature{1.0, 0.0, 0.0, 0.0, 0.0, 0.0}};
    m.beta = {-1.0, 1.0};
    m.intercept = 3.0;
    m.bandwidth = 1e3;
    m.lambda = 0.0;
    m.index_structure();
    return m;
}

} // namespace

TEST(Grid, Cardinality) {
    EXPECT_EQ(build_grid(2).size(), 64u);
    EXPECT_EQ(build_grid(5).size(), 2500u);
    EXPECT_EQ(build_grid(7).size(), 9604u);
    EXPECT_THROW(build_grid(1), InvalidInput);
}

TEST(Grid, ContainsCorners) {
    const auto g = build_grid(3, DoseSet{2.0, 0.5});
    EXPECT_EQ(g.points.front().x, (NormalizedState{{0, 0, 0, 0}}));
    EXPECT_EQ(g.points.front().u, (Dose{0, 0}));
    EXPECT_EQ(g.points.back().x, (NormalizedState{{1, 1, 1, 1}}));
    EXPECT_EQ(g.points.back().u, (Dose{2.0, 0.5}));
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.points[i].dose_index, i % 4);
}

TEST(KernelRidge, ZeroTargetsGiveZero) {
    const auto f = small_grid().features();
    const auto m = fit(f, std::vector<double>(f.size(), 0.0), 0.5, 1e-3);
    EXPECT_EQ(m.intercept, 0.0);
    for (double b : m.beta) EXPECT_EQ(b, 0.0);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) EXPECT_EQ(predict(m, random_feature(rng)), 0.0);
}

TEST(KernelRidge, ConstantTargetsReproduced) {
    const auto f = small_grid().features();
    const auto m = fit(f, std::vector<double>(f.size(), 4.25), 0.5, 1e-3);
    for (const auto& z : f) EXPECT_EQ(predict(m, z), 4.25);
}

TEST(KernelRidge, SingleCenter) {
    const Feature c{0.3, 0.1, 0.7, 0.2, 1.0, 0.0};
    const auto m = fit({c}, {2.5}, 1.0, 1e-6);
    // Closed form: intercept v, beta = (v - v) / (1 + lambda) = 0.
    EXPECT_EQ(m.intercept, 2.5);
    EXPECT_EQ(m.beta.at(0), 0.0);
    EXPECT_EQ(predict(m, c), 2.5);
}

TEST(KernelRidge, InterpolatesIndexTargets) {
    const auto f = small_grid().features();
    std::vector<double> q(f.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<double>(i);
    const auto m = fit(f, q, median_heuristic_bandwidth(f), 1e-6);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(predict(m, f[i]) - q[i]));
    EXPECT_LE(worst, 0.01 * 63.0);
}

TEST(KernelRidge, LinearInTargets) {
    const auto f = small_grid().features();
    const double bw = median_heuristic_bandwidth(f);
    const KernelRidge ridge(f, bw, 1e-3);
    const auto q1 = random_targets(f.size(), 2, 5.0);
    const auto q2 = random_targets(f.size(), 3, 0.5);
    std::vector<double> q12(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) q12[i] = q1[i] + q2[i];
    const auto m1 = ridge.fit(q1), m2 = ridge.fit(q2), m12 = ridge.fit(q12);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        const auto z = t < 64 ? f[static_cast<std::size_t>(t)] : random_feature(rng);
        const double sum = predict(m1, z) + predict(m2, z);
        EXPECT_LE(std::abs(predict(m12, z) - sum), 1e-8 * std::max(1.0, std::abs(sum)));
    }
}

TEST(KernelRidge, FarPointsDecayToIntercept) {
    const auto f = small_grid().features();
    const auto m = fit(f, random_targets(f.size(), 5), 0.5, 1e-3);
    EXPECT_EQ(predict(m, Feature{100, 100, 100, 100, 100, 100}), m.intercept);
}

TEST(KernelRidge, Deterministic) {
    const auto f = build_grid(3).features();
    const auto q = random_targets(f.size(), 6);
    const auto a = fit(f, q, 0.7, 1e-3), b = fit(f, q, 0.7, 1e-3);
    EXPECT_EQ(a.beta, b.beta);
    EXPECT_EQ(a.intercept, b.intercept);
}

TEST(KernelRidge, RejectsBadInput) {
    const Feature c{0, 0, 0, 0, 0, 0};
    EXPECT_THROW(KernelRidge({c, c}, 1.0, 1e-3), InvalidInput);
    EXPECT_THROW(KernelRidge({c}, 0.0, 1e-3), InvalidInput);
    EXPECT_THROW(fit({c}, {1.0, 2.0}, 1.0, 1e-3), InvalidInput);
}

TEST(KernelRidge, SingularSystemReportsCondition) {
    // Nearly coincident centers, no ridge.
    const Feature a{0, 0, 0, 0, 0, 0};
    const Feature b{1e-12, 0, 0, 0, 0, 0};
    try {
        KernelRidge(std::vector<Feature>{a, b}, 1.0, 0.0);
        FAIL() << "expected a numerical error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("rcond"), std::string::npos);
    }
}

namespace {

void expect_fast_path_matches(const KernelModel& m, const DoseSet& doses) {
    // Rounding scale of the cancelling kernel sum.
    double beta_mass = 0.0;
    for (double b : m.beta) beta_mass += std::abs(b);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.1);
    for (int t = 0; t < 100; ++t) {
        const NormalizedState x{{u(rng), u(rng), u(rng), u(rng)}};
        const auto fast = predict_doses(m, x, doses);
        for (std::size_t v = 0; v < kDoseCount; ++v) {
            const double direct = predict(m, make_feature(x, doses.at(v), doses));
            EXPECT_NEAR(fast[v], direct, 1e-14 * (std::abs(m.intercept) + beta_mass));
        }
    }
}

} // namespace

TEST(PredictDoses, TensorGridPathMatchesDirectSum) {
    const auto g = build_grid(3);
    const auto f = g.features();
    const auto m = fit(f, random_targets(f.size(), 7, 3.0), median_heuristic_bandwidth(f), 1e-3);
    ASSERT_TRUE(m.has_tensor_structure());
    expect_fast_path_matches(m, g.doses);
}

TEST(PredictDoses, ProductPathMatchesDirectSum) {
    const DoseSet doses;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Feature> centers;
    for (int s = 0; s < 12; ++s) {
        const NormalizedState x{{u(rng), u(rng), u(rng), u(rng)}};
        for (std::size_t d = 0; d < kDoseCount; ++d) centers.push_back(make_feature(x, doses.at(d), doses));
    }
    const auto m = fit(centers, random_targets(centers.size(), 14, 2.0), 0.8, 1e-3);
    ASSERT_TRUE(m.has_product_structure());
    ASSERT_FALSE(m.has_tensor_structure());
    expect_fast_path_matches(m, doses);
}

TEST(PredictDoses, UnstructuredCentersUseDirectSum) {
    const DoseSet doses;
    const auto m = fit({Feature{0.1, 0.2, 0.3, 0.4, 0.0, 1.0}, Feature{0.5, 0.5, 0.5, 0.5, 1.0, 1.0}}, {1.0, 3.0},
                       0.5, 1e-3);
    EXPECT_FALSE(m.has_product_structure());
    expect_fast_path_matches(m, doses);
}

TEST(ModelCsv, Roundtrip) {
    const auto f = small_grid().features();
    const auto m = fit(f, random_targets(f.size(), 9), 0.4, 1e-3);
    const auto path = std::filesystem::temp_directory_path() / "sdpchemo_model_roundtrip.csv";
    {
        std::ofstream out(path);
        out << model_to_csv(m);
    }
    const auto back = read_model_csv(path.string());
    EXPECT_EQ(back.centers, m.centers);
    EXPECT_EQ(back.beta, m.beta);
    EXPECT_EQ(back.intercept, m.intercept);
    EXPECT_EQ(back.bandwidth, m.bandwidth);
    EXPECT_EQ(back.lambda, m.lambda);
    std::filesystem::remove(path);
}

TEST(Statistics, TwoClustersHandComputed) {
    const auto m = two_level_model();
    ASSERT_EQ(predict(m, m.centers[0]), 2.0);
    ASSERT_EQ(predict(m, m.centers[1]), 4.0);
    const ClusterSet clusters{{psi_vector(ModelParams::nominal()), psi_vector(ModelParams::nominal())}, {0.5, 0.5}};
    const std::array<NormalizedState, 2> next{NormalizedState{{0, 0, 0, 0}}, NormalizedState{{1, 0, 0, 0}}};
    const auto stats =
        dose_statistics(m, clusters, DoseSet{}, 0.1, [&](std::size_t j) { return next[j]; });
    // mu = 3, sigma = 0.5 * 1 + 0.5 * 1 = 1.
    EXPECT_DOUBLE_EQ(stats.s_alpha[0], 3.1);
    EXPECT_EQ(stats.excursion, 1.0);
    const auto plain = dose_statistics(m, clusters, DoseSet{}, 0.0, [&](std::size_t j) { return next[j]; });
    EXPECT_EQ(plain.s_alpha[0], 3.0);
}

TEST(ExcursionBound, SingleClusterAndConstantModel) {
    const Grid& g = small_grid();
    const auto f = g.features();
    const ClusterSet one{{psi_vector(ModelParams::nominal())}, {1.0}};
    const auto varied = fit(f, random_targets(f.size(), 10), median_heuristic_bandwidth(f), 1e-3);
    EXPECT_EQ(excursion_bound(varied, one, g, 0.25, 20.2), 0.0);

    UncertaintyModel um;
    um.seed = 11;
    const auto clusters = cluster_psi(psi_samples(sample_params(um, 500)), 4, 12);
    const auto flat = fit(f, std::vector<double>(f.size(), 1.5), 0.8, 1e-3);
    EXPECT_EQ(excursion_bound(flat, clusters, g, 0.25, 20.2), 0.0);
    const double b = excursion_bound(varied, clusters, g, 0.25, 20.2);
    EXPECT_TRUE(std::isfinite(b));
    EXPECT_GT(b, 0.0);
}

TEST(MedianHeuristic, PositiveAndSubsampled) {
    const auto f = build_grid(5).features();
    const double bw = median_heuristic_bandwidth(f);
    EXPECT_GT(bw, 0.0);
    EXPECT_TRUE(std::isfinite(bw));
    EXPECT_EQ(bw, median_heuristic_bandwidth(f));
    EXPECT_EQ(median_heuristic_bandwidth({Feature{}}), 1.0);
}
