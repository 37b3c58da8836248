#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "multirobust/error.hpp"
#include "multirobust/store.hpp"
#include "run_config.hpp"

using namespace mrb;
using namespace mrb::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = MRB_CONFIG_DIR;
const fs::path kFixture = fs::path(MRB_FIXTURE_DIR) / "three_models";

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            (std::string("mrb-cli-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct CliResult {
  int status;
  std::string out;
  std::string err;
  json error() const { return json::parse(err)["error"]; }
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mrb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

json tiny_config(const fs::path& out) {
  json j = json::parse(R"({
    "dataset": {"n_train": 90, "n_validation": 30, "n_test": 30, "seed": 3},
    "attacks": [{"id": "linf", "grid": {"max": 0.2, "count": 2}},
                {"id": "brightness", "grid": [0.25, 0.5]}],
    "seeds": [1],
    "training": {"epochs": 2, "hidden": 8},
    "evaluation": {"seed": 5, "strategy": "binary"},
    "models": [{"id": "std", "defense": "standard", "seed": 1},
               {"id": "at", "defense": "at:linf@0.1", "seed": 2}]
  })");
  j["output"] = out.string();
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  write_json(p, j);
  return p;
}

}  // namespace

TEST(RunConfig, BundledConfigsParse) {
  for (const char* name : {"quick.json", "desk.json"}) {
    const auto c = load_run_config(kConfigs / name);
    EXPECT_EQ(c.attacks.size(), 6u) << name;
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{100, 101, 102}));
    EXPECT_DOUBLE_EQ(c.alpha, 0.03);
    ASSERT_NE(c.find_model("at-linf"), nullptr);
    const auto grid = c.attacks[0].grid();
    EXPECT_TRUE(c.attacks[0].grid_index(0.12)) << name;
    EXPECT_DOUBLE_EQ(grid.back(), 0.2);
  }
  EXPECT_EQ(load_run_config(kConfigs / "quick.json").attacks[0].grid().size(), 5u);
  EXPECT_EQ(load_run_config(kConfigs / "desk.json").attacks[0].grid().size(), 10u);
}

TEST(RunConfig, ErrorsCarryPaths) {
  auto path_of = [](const json& j) {
    try {
      parse_run_config(j).validate();
    } catch (const Error& e) {
      return e.path().empty() ? std::string(to_string(e.kind())) : e.path();
    }
    return std::string("accepted");
  };
  json j = tiny_config("x");
  j["attacks"][0]["grid"] = {{"max", 0.2}};
  EXPECT_EQ(path_of(j), "/attacks/0/grid/count");
  j = tiny_config("x");
  j["attacks"][1]["grid"][1] = "big";
  EXPECT_EQ(path_of(j), "/attacks/1/grid/1");
  j = tiny_config("x");
  j["dataset"]["n_train"] = -5;
  EXPECT_EQ(path_of(j), "configuration");
  j = tiny_config("x");
  j["models"][1]["defense"] = "at:l2@1";
  EXPECT_EQ(path_of(j), "configuration");
  j = tiny_config("x");
  j["models"][1]["id"] = "std";
  EXPECT_EQ(path_of(j), "configuration");
  j = tiny_config("x");
  j["seeds"] = "1,2";
  EXPECT_NE(path_of(j), "accepted");
}

TEST(RunConfig, Overrides) {
  auto c = parse_run_config(tiny_config("x"));
  Overrides o;
  o.families = std::vector<std::string>{"brightness"};
  o.grid_size = 4;
  o.seeds = parse_seed_list("7,8");
  o.alpha = 0.1;
  o.output = "elsewhere";
  apply_overrides(c, o);
  ASSERT_EQ(c.attacks.size(), 1u);
  EXPECT_EQ(c.attacks[0].grid().size(), 4u);
  EXPECT_DOUBLE_EQ(c.attacks[0].grid()[0], 0.125);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8}));
  EXPECT_EQ(c.output, "elsewhere");
  Overrides bad;
  bad.families = std::vector<std::string>{"l2"};
  EXPECT_THROW(apply_overrides(c, bad), Error);
  EXPECT_THROW(parse_seed_list("1,x"), Error);
  EXPECT_THROW(parse_seed_list(""), Error);
  EXPECT_EQ(parse_name_list("a, b,,c"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).status, 2);
  EXPECT_EQ(invoke({"frobnicate"}).status, 2);
  const auto r = invoke({"baseline"});
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.error()["kind"], "usage");
  EXPECT_EQ(invoke({"baseline", "--config", "/nonexistent/config.json"}).status, 2);
  EXPECT_EQ(invoke({"--help"}).status, 0);
}

TEST(Cli, MissingPriorStepsNameTheCommand) {
  TempDir dir;
  const auto cfg = write_config(dir.path(), tiny_config(dir.path() / "out"));
  auto r = invoke({"metrics", "--out", dir.path().string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.error()["message"].get<std::string>().find("first"), std::string::npos) << r.err;
  r = invoke({"eval", "--config", cfg.string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.error()["message"].get<std::string>().find("mrb train --model std"), std::string::npos) << r.err;
  r = invoke({"rank", "--out", dir.path().string()});
  EXPECT_NE(r.error()["message"].get<std::string>().find("first"), std::string::npos) << r.err;
}

TEST(Cli, LockFileBlocksConcurrentCommands) {
  TempDir dir;
  {
    OutputLock held(dir.path());
    EXPECT_THROW(OutputLock second(dir.path()), Error);
    const auto r = invoke({"rank", "--out", dir.path().string()});
    EXPECT_EQ(r.status, 1);
    EXPECT_EQ(r.error()["kind"], "io");
  }
  EXPECT_FALSE(fs::exists(dir.path() / OutputLock::kFileName));
  EXPECT_NO_THROW(OutputLock again(dir.path()));
}

TEST(Cli, FixtureImportMetricsRank) {
  TempDir dir;
  const fs::path out = dir.path() / "board";
  auto r = invoke({"import", "--records", (kFixture / kBundleFile).string(), "--baselines",
                (kFixture / kBaselinesFile).string(), "--out", out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  ASSERT_EQ(invoke({"metrics", "--out", out.string()}).status, 0);
  const std::string first = read_text(out / kReportsFile);
  ASSERT_EQ(invoke({"metrics", "--out", out.string()}).status, 0);
  EXPECT_EQ(read_text(out / kReportsFile), first);

  r = invoke({"rank", "--out", out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const json summary = json::parse(r.out);
  EXPECT_EQ(summary["cr_ind_avg"], json({"m-c", "m-b", "m-a"}));
  EXPECT_EQ(summary["cr_ind_worst"], json({"m-c", "m-a", "m-b"}));
  EXPECT_EQ(leaderboard_from_json(read_json(out / kLeaderboardAvgFile))[2].model_id, "m-a");

  r = invoke({"export-viz", "--out", out.string(), "--models", "m-a,m-c"});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "viz" / "m-b.json"));
  EXPECT_EQ(read_json(out / "viz_comparison.json")["models"].size(), 2u);
  r = invoke({"export-viz", "--out", out.string(), "--models", "m-a,m-b,m-c,m-a,m-b,m-c"});
  EXPECT_EQ(r.status, 2);
}

TEST(Cli, ImportRejectsBadRecordsWithPath) {
  TempDir dir;
  json j = read_json(kFixture / kBundleFile);
  j["records"][4]["accuracy"] = 1.2;
  write_json(dir.path() / "bad.json", j);
  const auto r = invoke({"import", "--records", (dir.path() / "bad.json").string(), "--baselines",
                      (kFixture / kBaselinesFile).string(), "--out", (dir.path() / "o").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.error()["kind"], "schema");
  EXPECT_EQ(r.error()["path"], "/records/4/accuracy");
}

TEST(Cli, TinyPipelineProducesEveryFile) {
  TempDir dir;
  const fs::path out = dir.path() / "run";
  const auto cfg = write_config(dir.path(), tiny_config(out));
  const auto r = invoke({"pipeline", "--config", cfg.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char* f : {kBundleFile, kBaselinesFile, kReportsFile, kLeaderboardAvgFile, kLeaderboardWorstFile,
                        "models/std.json", "models/at.json", "profiles/at.json", "viz/std.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto data = load_bundle_dir(out);
  EXPECT_EQ(data.bundle.records.size(), 2u * 5u);
  EXPECT_EQ(data.reports.size(), 2u);
  EXPECT_FALSE(fs::exists(out / OutputLock::kFileName));

  // Re-running a single step reproduces its outputs.
  const std::string bundle = read_text(out / kBundleFile);
  ASSERT_EQ(invoke({"eval", "--config", cfg.string(), "--model", "at"}).status, 0);
  EXPECT_EQ(read_text(out / kBundleFile), bundle);
}
