#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "vlgpo/config.hpp"
#include "test_util.hpp"

using namespace vlgpo;
using namespace vlgpo::testing;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in);
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, DefaultsAreValid) {
    const auto c = default_run_config();
    EXPECT_EQ(c.task.name, "synthetic-hard");
    EXPECT_EQ(c.task.landscape_seed, 7u);
    EXPECT_EQ(c.sampler.batch, 512u);
    EXPECT_EQ(c.sampler.top_k, 128u);
    EXPECT_EQ(c.flow.latent_dim, c.vae.latent_dim);
    EXPECT_EQ(c.eval.seeds.size(), 5u);
    EXPECT_EQ(c.vae_checkpoint(), std::filesystem::path("checkpoints") / "vae.json");
    EXPECT_EQ(c.flow_checkpoint(true).filename(), "flow_conditional.json");
}

TEST(Config, ParsesEverySection) {
    const auto c = parse(R"(
[task]
name = synthetic-medium
library_size = 5000
holdout = 0.2
[paths]
checkpoints = ck
results = out
[vae]
latent_dim = 8
beta = 0.005
epochs = 3
[flow]
hidden = 32
depth = 2
epochs = 4
conditional = true
[predictor]
epochs = 5
role = smoothed
smoothing_k = 3
[sampler]
K = 16
J = 4
alpha = 1.5
target_y = 0.8
batch = 64
top_k = 16
mode = naive
objective = maximize
temperature = 0.5
[eval]
seeds = 3, 4
alpha_grid = 0, 1.5
J_grid = 0,2
y_grid = 0.5
K_grid = 4
grid_seeds = 9
[run]
seed = 42
parallelism = 2
)");
    EXPECT_EQ(c.task.name, "synthetic-medium");
    EXPECT_EQ(c.task.library_size, 5000u);
    EXPECT_DOUBLE_EQ(c.task.holdout, 0.2);
    EXPECT_EQ(c.paths.results, "out");
    EXPECT_EQ(c.vae.latent_dim, 8u);
    EXPECT_EQ(c.flow.latent_dim, 8u);  // inherited from [vae]
    EXPECT_TRUE(c.flow.conditional);
    EXPECT_EQ(c.flow_train.epochs, 4u);
    EXPECT_EQ(c.predictor.role, PredictorRole::smoothed);
    EXPECT_EQ(c.predictor.smoothing_k, 3u);
    EXPECT_EQ(c.sampler.mode, GuidanceMode::naive);
    EXPECT_EQ(c.sampler.objective, GuidanceObjective::maximize);
    EXPECT_DOUBLE_EQ(c.sampler.alpha, 1.5);
    EXPECT_EQ(c.eval.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(c.eval.alpha_grid, (std::vector<double>{0.0, 1.5}));
    EXPECT_EQ(c.eval.J_grid, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.sampler.workers, 2u);
    EXPECT_EQ(to_json(c)["sampler"]["mode"], "naive");
}

TEST(Config, UnconditionalModeZeroesGuidance) {
    const auto c = parse("[sampler]\nmode = unconditional\n");
    EXPECT_EQ(c.sampler.alpha, 0.0);
    EXPECT_EQ(c.sampler.J, 0u);
}

TEST(Config, UnknownKeyIsRejected) {
    const auto msg = error_of("[sampler]\nalpah = 2\n");
    EXPECT_NE(msg.find("unknown key [sampler] alpah"), std::string::npos) << msg;
    EXPECT_NE(error_of("[extra]\nx = 1\n").find("unknown key [extra] x"), std::string::npos);
}

TEST(Config, ReportsAllProblemsAtOnce) {
    const auto msg = error_of("[vae]\nlatent_dim = 8\n[flow]\nlatent_dim = 4\n[sampler]\nmode = greedy\nK = abc\n"
                              "[eval]\nseeds = 1, x\n");
    EXPECT_NE(msg.find("4 problems"), std::string::npos) << msg;
    EXPECT_NE(msg.find("latent dimensions disagree"), std::string::npos);
    EXPECT_NE(msg.find("greedy"), std::string::npos);
    EXPECT_NE(msg.find("K = 'abc'"), std::string::npos);
    EXPECT_NE(msg.find("seeds"), std::string::npos);
}

TEST(Config, SemanticChecks) {
    EXPECT_NE(error_of("[sampler]\nbatch = 10\ntop_k = 20\n").find("top_k"), std::string::npos);
    EXPECT_NE(error_of("[task]\nholdout = 1.5\n").find("holdout"), std::string::npos);
    EXPECT_NE(error_of("[task]\nname = protein\n").find("[task] name"), std::string::npos);
    EXPECT_NE(error_of("[flow]\nembedding_dim = 7\n").find("embedding_dim"), std::string::npos);
    EXPECT_NE(error_of("[run]\nparallelism = 0\n").find("parallelism"), std::string::npos);
    EXPECT_NE(error_of("[sampler]\nalpha = -1\n").find("alpha"), std::string::npos);
}

TEST(Config, CsvTaskNeedsExistingData) {
    EXPECT_NE(error_of("[task]\nname = csv\n").find("data is required"), std::string::npos);
    EXPECT_NE(error_of("[task]\nname = csv\ndata = /nonexistent/x.csv\n").find("not found"), std::string::npos);
    const auto dir = fresh_temp_dir("cfg");
    std::ofstream(dir / "d.csv") << "sequence,fitness\nAC,1\n";
    EXPECT_NO_THROW(parse("[task]\nname = csv\ndata = " + (dir / "d.csv").string() + "\n"));
    std::filesystem::remove_all(dir);
}

TEST(Config, ExpandsEnvironmentInPathsOnly) {
    ::setenv("VLGPO_TEST_ROOT", "/tmp/somewhere", 1);
    const auto c = parse("[paths]\ncheckpoints = ${VLGPO_TEST_ROOT}/ck\n");
    EXPECT_EQ(c.paths.checkpoints, "/tmp/somewhere/ck");
    ::unsetenv("VLGPO_TEST_UNSET_VAR");
    EXPECT_NE(error_of("[paths]\nresults = ${VLGPO_TEST_UNSET_VAR}/r\n").find("VLGPO_TEST_UNSET_VAR"), std::string::npos);
    EXPECT_NE(error_of("[sampler]\nalpha = ${VLGPO_TEST_ROOT}\n").find("not a real number"), std::string::npos);
}

TEST(Config, FileErrors) {
    EXPECT_THROW(load_run_config("/nonexistent/config.ini"), IoError);
    EXPECT_THROW(parse("[task\nname = x\n"), ValidationError);
}
