#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sdpchemo/config.hpp"

using namespace sdpchemo;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const auto c = config_from_json(json::object());
    EXPECT_EQ(c, RunConfig{});
    EXPECT_EQ(c.solver.grid_resolution, 7u);
    EXPECT_EQ(c.uncertainty.sample_count, 10000u);
    EXPECT_EQ(c.uncertainty.cluster_count, 20u);
    EXPECT_EQ(c.evaluation.n_x0, 100u);
    EXPECT_EQ(c.evaluation.n_p, 200u);
    EXPECT_EQ(c.evaluation.n_sim, 50);
    ASSERT_EQ(c.controllers.size(), 3u);
    EXPECT_TRUE(c.controllers[0].dirac);
    EXPECT_EQ(c.controllers[2].alpha, 0.1);
}

TEST(Config, JsonRoundtrip) {
    RunConfig c;
    c.seed = 123456789012345ull;
    c.output_dir = "results/x";
    c.model.k2 = 0.65;
    c.cost.rho_c = 3.5;
    c.doses.u2_max = 0.5;
    c.solver.grid_resolution = 4;
    c.solver.gamma = 1.0;
    c.controllers.push_back({"steep", false, 0.3, 0.9});
    c.evaluation.n_sim = 7;
    const auto back = config_from_json(json::parse(config_to_json(c).dump()));
    EXPECT_EQ(back, c);
}

TEST(Config, GammaOutOfRange) {
    EXPECT_EQ(config_error({{"solver", {{"gamma", 1.5}}}}), "solver.gamma: gamma out of (0,1]");
    EXPECT_NE(config_error({{"solver", {{"gamma", 0.0}}}}), "");
    EXPECT_EQ(config_error({{"solver", {{"gamma", 1.0}}}}), "");
}

TEST(Config, FieldLevelMessages) {
    EXPECT_NE(config_error({{"solver", {{"gamma_typo", 0.9}}}}).find("solver.gamma_typo"), std::string::npos);
    EXPECT_NE(config_error({{"seed", "abc"}}).find("seed"), std::string::npos);
    EXPECT_NE(config_error({{"cost", {{"x2_min", 1.5}}}}).find("cost.x2_min"), std::string::npos);
    EXPECT_NE(config_error({{"uncertainty", {{"sample_count", 5}, {"cluster_count", 10}}}}).find("cluster_count"),
              std::string::npos);
    EXPECT_NE(config_error({{"controllers", json::array({{{"id", "x"}, {"alpha", 0.1}}})}}).find("controllers[0].dirac"),
              std::string::npos);
    EXPECT_NE(config_error({{"controllers", json::array({{{"id", "a"}, {"dirac", true}}, {{"id", "a"}}})}})
                  .find("duplicate"),
              std::string::npos);
    EXPECT_NE(config_error({{"controllers", json::array({{{"id", "../up"}, {"dirac", true}}})}}).find("id"),
              std::string::npos);
    EXPECT_NE(config_error({{"model", {{"a", -0.25}}}}).find("model.a"), std::string::npos);
}

TEST(Config, DerivedSeedsAndSolverSettings) {
    RunConfig c;
    c.seed = 100;
    EXPECT_EQ(c.sampling_seed(), 100u);
    EXPECT_EQ(c.clustering_seed(), 101u);
    EXPECT_EQ(c.eval_x0_seed(), 102u);
    EXPECT_EQ(c.eval_p_seed(), 103u);

    c.controllers.push_back({"custom", false, 0.2, 1.0});
    const auto s = c.solver_config(c.controller("custom"));
    EXPECT_EQ(s.gamma, 1.0);
    EXPECT_EQ(s.alpha, 0.2);
    EXPECT_EQ(c.solver_config(c.controller("variance")).gamma, 0.95);
    EXPECT_THROW((void)c.controller("missing"), ConfigError);

    EXPECT_TRUE(c.uncertainty_model(true).dirac);
    EXPECT_EQ(c.uncertainty_model(false).seed, 100u);
}

TEST(Config, LoadErrors) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), IoError);
    const auto path = std::filesystem::temp_directory_path() / "sdpchemo_bad_config.json";
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    EXPECT_THROW(load_config(path.string()), ConfigError);
    std::filesystem::remove(path);
}
