#include "mmood/text.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace {

namespace fs = std::filesystem;

fs::path const kFixture = fs::path(MMOOD_SOURCE_DIR) / "tests" / "fixtures" / "e2e";

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(std::string const& args, fs::path const& dir)
{
    auto const log = dir / "cli.log";
    std::string const cmd = std::string("\"") + MMOOD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    int const status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, mmood::read_file(log.string())};
}

fs::path fresh_dir(std::string const& name)
{
    auto dir = fs::temp_directory_path() / ("mmood_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string common_args(fs::path const& dir, std::string const& config = "near.json")
{
    return "--config \"" + (kFixture / config).string() + "\" --mock --output \"" + (dir / "out").string() +
           "\" --cache-dir \"" + (dir / "cache").string() + "\"";
}

TEST(Cli, MissingSubcommandIsUsageError)
{
    auto const dir = fresh_dir("usage");
    EXPECT_EQ(run_cli("", dir).exit_code, 2);
}

TEST(Cli, MissingConfigFileIsStageTagged)
{
    auto const dir = fresh_dir("noconfig");
    auto const r = run_cli("--config \"" + (dir / "absent.json").string() + "\" run", dir);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.output.find("mmood: error: [config]"), std::string::npos) << r.output;
}

TEST(Cli, StagedSubcommandsMatchRun)
{
    auto const dir = fresh_dir("staged");
    auto const args = common_args(dir);
    auto const out = dir / "out";

    ASSERT_EQ(run_cli(args + " envision", dir).exit_code, 0);
    ASSERT_TRUE(fs::exists(out / "labels.tsv"));
    auto const labels = (dir / "labels.tsv").string();
    fs::copy_file(out / "labels.tsv", labels);

    ASSERT_EQ(run_cli(args + " embed --labels \"" + labels + "\"", dir).exit_code, 0);
    EXPECT_TRUE(fs::exists(out / "embeddings.json"));

    ASSERT_EQ(run_cli(args + " eval --labels \"" + labels + "\"", dir).exit_code, 0);
    auto const eval_report = mmood::read_file((out / "report.tsv").string());
    auto const scores = (dir / "scores.json").string();
    fs::copy_file(out / "scores.json", scores);

    auto const r = run_cli(args + " report --scores \"" + scores + "\"", dir);
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_EQ(mmood::read_file((out / "report.tsv").string()), eval_report);

    auto const full = fresh_dir("staged_full");
    ASSERT_EQ(run_cli(common_args(full) + " run", full).exit_code, 0);
    EXPECT_EQ(mmood::read_file((full / "out" / "report.tsv").string()), eval_report);
}

TEST(Cli, SeedOverrideChangesEnvisionedLabels)
{
    auto const a = fresh_dir("seed_a");
    auto const b = fresh_dir("seed_b");
    ASSERT_EQ(run_cli(common_args(a) + " --seed 1 envision", a).exit_code, 0);
    ASSERT_EQ(run_cli(common_args(b) + " --seed 2 envision", b).exit_code, 0);
    EXPECT_NE(mmood::read_file((a / "out" / "labels.tsv").string()),
              mmood::read_file((b / "out" / "labels.tsv").string()));
}

} // namespace
