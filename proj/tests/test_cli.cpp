#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace fs = std::filesystem;
using vlgpo::testing::fresh_temp_dir;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun run(const std::string& args, const fs::path& scratch) {
    const auto log = scratch / "cli_output.txt";
    const std::string cmd = std::string("\"") + VLGPO_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

/// Writes a tiny configuration rooted at `dir`.
fs::path write_config(const fs::path& dir, const std::string& extra = "") {
    const auto p = dir / "tiny.ini";
    std::ofstream(p) << "[task]\nname = synthetic-hard\nlibrary_size = 2000\n"
                     << "[paths]\ncheckpoints = " << (dir / "ck").string() << "\nresults = " << (dir / "res").string()
                     << "\n[vae]\nepochs = 3\n[flow]\nepochs = 3\n[predictor]\nepochs = 3\n"
                     << "[sampler]\nbatch = 64\ntop_k = 16\nJ = 2\nK = 4\n"
                     << "[eval]\nseeds = 0,1\nalpha_grid = 0,0.5,1,2\nJ_grid = 0,1,2,3\ny_grid = 1\nK_grid = 2,4\n"
                     << extra;
    return p;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(fresh_temp_dir("cli"));
        cfg_ = new fs::path(write_config(*dir_));
        for (const char* cmd : {"train-vae", "train-prior", "train-prior --conditional", "train-predictor"}) {
            const auto r = run("-c " + cfg_->string() + " " + cmd, *dir_);
            ASSERT_EQ(r.code, 0) << cmd << "\n" << r.out;
        }
    }
    static void TearDownTestSuite() {
        fs::remove_all(*dir_);
        delete dir_;
        delete cfg_;
    }

    static CliRun cli(const std::string& args) { return run("-c " + cfg_->string() + " " + args, *dir_); }

    static fs::path* dir_;
    static fs::path* cfg_;
};

fs::path* Cli::dir_ = nullptr;
fs::path* Cli::cfg_ = nullptr;

}  // namespace

TEST(CliStandalone, PriorBeforeVaeIsAValidationError) {
    const auto dir = fresh_temp_dir("cli_order");
    const auto r = run("-c " + write_config(dir).string() + " train-prior", dir);
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("train-vae"), std::string::npos) << r.out;
    fs::remove_all(dir);
}

TEST(CliStandalone, BadArgumentsExitWithOne) {
    const auto dir = fresh_temp_dir("cli_args");
    EXPECT_EQ(run("no-such-command", dir).code, 1);
    EXPECT_EQ(run("-c /nonexistent.ini sample", dir).code, 1);
    const auto bad = write_config(dir, "[bogus]\nkey = 1\n");
    const auto r = run("-c " + bad.string() + " train-vae", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("unknown key [bogus] key"), std::string::npos) << r.out;
    fs::remove_all(dir);
}

TEST_F(Cli, InvalidModeListsTheChoices) {
    const auto r = cli("sample --mode greedy");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("manifold, naive, unconditional, learned_posterior"), std::string::npos) << r.out;
}

TEST_F(Cli, SamplingIsDeterministicAndEchoesDefaults) {
    const auto a = *dir_ / "a.json", b = *dir_ / "b.json";
    ASSERT_EQ(cli("--seed 3 sample -o " + a.string()).code, 0);
    ASSERT_EQ(cli("--seed 3 sample -o " + b.string()).code, 0);
    const auto ja = nlohmann::json::parse(slurp(a)), jb = nlohmann::json::parse(slurp(b));
    EXPECT_EQ(ja["sequences"], jb["sequences"]);
    EXPECT_EQ(ja["checksums"], jb["checksums"]);
    EXPECT_EQ(ja["config"]["seed"], 3);
    EXPECT_EQ(ja["config"]["batch"], 64);
    EXPECT_EQ(ja["config"]["top_k"], 16);
    EXPECT_TRUE(ja.contains("metrics"));
    EXPECT_TRUE(ja.contains("provenance"));

    // Built-in defaults when the config does not override them.
    const auto defaults_cfg = *dir_ / "defaults.ini";
    std::ofstream(defaults_cfg) << "[paths]\ncheckpoints = " << (*dir_ / "ck").string() << "\nresults = "
                                << (*dir_ / "res").string() << "\n[task]\nlibrary_size = 2000\n[sampler]\nK = 2\n";
    const auto d = *dir_ / "d.json";
    ASSERT_EQ(run("-c " + defaults_cfg.string() + " sample --mode unconditional -o " + d.string(), *dir_).code, 0);
    const auto jd = nlohmann::json::parse(slurp(d));
    EXPECT_EQ(jd["config"]["batch"], 512);
    EXPECT_EQ(jd["config"]["top_k"], 128);
}

TEST_F(Cli, UnconditionalForcesZeroGuidance) {
    const auto u = *dir_ / "u.json";
    const auto r = cli("sample --mode unconditional --alpha 5 --J 3 -o " + u.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(slurp(u));
    EXPECT_EQ(j["config"]["alpha"], 0.0);
    EXPECT_EQ(j["config"]["J"], 0);
    EXPECT_EQ(j["config"]["mode"], "unconditional");
}

TEST_F(Cli, DivergenceExitsWithTwo) {
    const auto r = cli("sample --alpha inf -o " + (*dir_ / "x.json").string());
    EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, CorruptedCheckpointIsRejected) {
    const auto copy = *dir_ / "ck_copy";
    fs::copy(*dir_ / "ck", copy, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    auto text = slurp(copy / "vae.json");
    const auto pos = text.find("\"values\":[");
    ASSERT_NE(pos, std::string::npos);
    text.insert(pos + 10, "1");
    std::ofstream(copy / "vae.json") << text;
    const auto cfg = *dir_ / "corrupt.ini";
    std::ofstream(cfg) << "[paths]\ncheckpoints = " << copy.string() << "\n[task]\nlibrary_size = 2000\n"
                       << "[sampler]\nbatch = 16\ntop_k = 4\nK = 2\n";
    const auto r = run("-c " + cfg.string() + " sample -o " + (*dir_ / "c.json").string(), *dir_);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("checksum"), std::string::npos) << r.out;
}

TEST_F(Cli, UnwritableResultsDirectoryExitsWithThree) {
    std::ofstream(*dir_ / "file_not_dir") << "x";
    const auto r = cli("--results-dir " + (*dir_ / "file_not_dir").string() + " sample");
    EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(Cli, GridSearchWritesSixteenCells) {
    const auto r = cli("gridsearch");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("16 cells, 0 failed"), std::string::npos) << r.out;
    const auto wrote = r.out.substr(r.out.find("wrote ") + 6);
    const fs::path dir = wrote.substr(0, wrote.find('\n'));
    const auto csv = slurp(dir / "cells.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 18);  // provenance + header + 16 cells
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    EXPECT_TRUE(fs::exists(dir / "config.ini"));
}

TEST_F(Cli, AblationHasThreeRows) {
    const auto r = cli("ablate");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("manifold constraint"), std::string::npos);
    EXPECT_NE(r.out.find("w/o manifold constraint"), std::string::npos);
    EXPECT_NE(r.out.find("learned posterior"), std::string::npos);
}

TEST_F(Cli, EvaluateExtrapolateAndOdeSweepRun) {
    auto r = cli("evaluate --mode unconditional");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("±"), std::string::npos);
    r = cli("extrapolate");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("4 rows"), std::string::npos) << r.out;  // 2 modes x 1 y x 2 seeds
    r = cli("ode-sweep");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("2 rows"), std::string::npos) << r.out;
}
