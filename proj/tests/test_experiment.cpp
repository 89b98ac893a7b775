#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fogsim/experiment.hpp"

using namespace fogsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fogsim_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Runs the CLI and returns its exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FOGSIM_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  if (raw == -1) return -1;
  return WEXITSTATUS(raw);
}

}  // namespace

TEST(ConfigJson, DefaultsWhenEmpty) {
  const auto c = experiment_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.scenario.num_tasks, 500);
  EXPECT_EQ(c.agent.epochs, 3000);
  EXPECT_EQ(c.agent.batch_size, 256);
  EXPECT_EQ(c.agent.memory_capacity, 50000);
  EXPECT_EQ(c.agent.gamma, 0.95);
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.release_mode, ReleaseMode::whole);
}

TEST(ConfigJson, ReadsEverySection) {
  const auto j = nlohmann::json::parse(R"({
    "scenario": {"seed": 7, "num_tasks": 120, "horizon_s": 12, "data_size_mean_bits": 2e6},
    "capacity": {"bandwidth_hz": 3.6e6, "qos_s": 2, "shannon_plus_one": false},
    "agent": {"gamma": 0.5, "epochs": 10, "actor_step_size": 0.01, "beta1": 0.8},
    "engine": {"release_mode": "phased"},
    "allocator": "tx-only",
    "allocators": ["ora", "random"],
    "sweep": {"variable": "intensity_mean", "values": [5, 10]},
    "seeds": [1, 2],
    "output_dir": "elsewhere",
    "train_on_the_fly": true
  })");
  const auto c = experiment_config_from_json(j);
  EXPECT_EQ(c.scenario.seed, 7u);
  EXPECT_EQ(c.scenario.num_tasks, 120);
  EXPECT_EQ(c.scenario.data_size_mean_bits, 2e6);
  EXPECT_EQ(capacity_from_table(c.scenario.capacity).total_blocks, 20);
  EXPECT_EQ(capacity_from_table(c.scenario.capacity).qos_deadline_s, 2.0);
  EXPECT_FALSE(c.scenario.capacity.shannon_plus_one);
  EXPECT_EQ(c.agent.gamma, 0.5);
  EXPECT_EQ(c.agent.actor_optimizer.step_size, 0.01);
  EXPECT_EQ(c.agent.actor_optimizer.beta1, 0.8);
  EXPECT_EQ(c.agent.critic_optimizer.beta1, 0.8);
  EXPECT_EQ(c.release_mode, ReleaseMode::phased);
  EXPECT_EQ(c.allocator, "tx-only");
  EXPECT_EQ(c.allocators, (std::vector<std::string>{"ora", "random"}));
  EXPECT_EQ(c.sweep.variable, SweepVariable::intensity_mean);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.output_dir, "elsewhere");
  EXPECT_TRUE(c.train_on_the_fly);
}

TEST(ConfigJson, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {R"({"bogus": 1})", R"({"agent": {"learning_rate": 1}})",
                           R"({"scenario": {"num_tasks": "many"}})",
                           R"({"engine": {"release_mode": "sometimes"}})",
                           R"({"allocator": "magic"})", R"({"sweep": {"variable": "area"}})",
                           R"({"seeds": []})", R"({"agent": {"batch_size": 100, "memory_capacity": 10}})",
                           R"({"capacity": {"bandwidth_hz": 1e5}})"}) {
    EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(text)), InvalidConfig) << text;
  }
}

TEST(ConfigJson, ShippedDefaultFileMatchesBuiltInDefaults) {
  const auto c = load_experiment_config(FOGSIM_SOURCE_DIR "/configs/default.json");
  const ExperimentConfig d;
  EXPECT_EQ(c.scenario.num_tasks, d.scenario.num_tasks);
  EXPECT_EQ(c.scenario.data_size_std_bits, d.scenario.data_size_std_bits);
  EXPECT_EQ(c.agent.actor_optimizer.step_size, d.agent.actor_optimizer.step_size);
  EXPECT_EQ(c.agent.entropy_coef, d.agent.entropy_coef);
  EXPECT_EQ(c.sweep.values, d.sweep.values);
  EXPECT_EQ(c.seeds, d.seeds);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), InvalidConfig);
}

TEST(Sweep, ApplyValueKeepsCoefficientOfVariation) {
  const ScenarioConfig base;
  const auto d = apply_sweep_value(base, SweepVariable::data_size_mean, 2e6);
  EXPECT_EQ(d.data_size_mean_bits, 2e6);
  EXPECT_DOUBLE_EQ(d.data_size_std_bits, 6e5);
  const auto m = apply_sweep_value(base, SweepVariable::intensity_mean, 5);
  EXPECT_DOUBLE_EQ(m.intensity_std, 1.5);
  EXPECT_EQ(apply_sweep_value(base, SweepVariable::num_tasks, 650).num_tasks, 650);
}

TEST(Sweep, RowCountsAndAggregates) {
  ExperimentConfig exp;
  exp.allocators = {"random", "oracle", "fixed"};
  RandomAllocator random;
  GreedyOracleAllocator greedy;
  FixedAllocator fixed({5, 6});
  const std::map<std::string, Allocator*> policies{
      {"random", &random}, {"oracle", &greedy}, {"fixed", &fixed}};
  const auto res = run_sweep(exp, policies);
  // 5 values x 3 allocators x 5 seeds, then 15 aggregates.
  ASSERT_EQ(res.rows.size(), 75u + 15u);
  EXPECT_EQ(res.aggregates().size(), 15u);

  // Recompute one aggregate by hand.
  std::vector<double> v;
  for (const auto& r : res.rows)
    if (r.kind == "seed" && r.allocator == "random" && r.value == 600) v.push_back(r.mean_total_s);
  ASSERT_EQ(v.size(), 5u);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 5.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const auto* agg = res.aggregate("random", 600);
  ASSERT_NE(agg, nullptr);
  EXPECT_NEAR(agg->mean_total_s, mean, 1e-12);
  EXPECT_NEAR(agg->std_total_s, std::sqrt(ss / 4.0), 1e-12);
  EXPECT_EQ(agg->seed, 5u);

  std::ostringstream os;
  write_sweep_csv(os, res);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepCsvHeader);
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 90);

  EXPECT_THROW(run_sweep(exp, {{"random", &random}}), InvalidConfig);
}

TEST(Sweep, EvaluationIsDeterministic) {
  ExperimentConfig exp;
  exp.allocators = {"random"};
  exp.sweep.values = {300};
  RandomAllocator random;
  std::ostringstream a, b;
  write_sweep_csv(a, run_sweep(exp, {{"random", &random}}));
  write_sweep_csv(b, run_sweep(exp, {{"random", &random}}));
  EXPECT_EQ(a.str(), b.str());
}

TEST(AgentFactory, FillsFixedSharesAndScales) {
  const ExperimentConfig exp;
  const auto tx = agent_config_for("tx-only", exp);
  EXPECT_EQ(tx.mode, HeadMode::blocks_only);
  EXPECT_EQ(tx.fixed_units, 6);
  const auto comp = agent_config_for("comp-only", exp);
  EXPECT_EQ(comp.mode, HeadMode::units_only);
  EXPECT_EQ(comp.fixed_blocks, 5);
  const auto ora = agent_config_for("ora", exp);
  EXPECT_EQ(ora.data_scale_bits, 1e6);
  EXPECT_EQ(ora.cycles_scale, 1e7);
  EXPECT_THROW(agent_config_for("random", exp), InvalidConfig);
  EXPECT_THROW(make_fixed_policy("ora"), InvalidConfig);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    // Small, fast configuration.
    write_text(dir / "small.json", R"({
      "scenario": {"num_tasks": 40, "horizon_s": 4},
      "agent": {"epochs": 4, "batch_size": 16, "memory_capacity": 500, "hidden_width": 8},
      "sweep": {"values": [30, 40]},
      "seeds": [1, 2]
    })");
  }
  fs::path dir;
};

TEST_F(Cli, OracleSolvesSmallInstance) {
  write_text(dir / "inst.txt",
             "# fogsim-scenario v1\n"
             "# capacity block_hz=180000 unit_cycles=10000000 blocks=3 units=3 qos_s=1 drop_s=10 "
             "shannon_plus_one=1\n"
             "# link tx_power_w=0.2 noise_dbm=-104\n"
             "id,arrival_s,l_bits,mu,gain_db\n"
             "0,0,200000,10,-100\n");
  EXPECT_EQ(run_cli("oracle " + (dir / "inst.txt").string(), dir / "log"), 0);
  const std::string out = slurp(dir / "log");
  EXPECT_NE(out.find("0,3,3"), std::string::npos) << out;
}

TEST_F(Cli, OracleGuardExitsWithFour) {
  std::string text =
      "# fogsim-scenario v1\n"
      "# capacity block_hz=180000 unit_cycles=10000000 blocks=3 units=3 qos_s=1 drop_s=10 "
      "shannon_plus_one=1\n"
      "# link tx_power_w=0.2 noise_dbm=-104\n"
      "id,arrival_s,l_bits,mu,gain_db\n";
  for (int i = 0; i < 5; ++i) text += std::to_string(i) + ",0,200000,10,-100\n";
  write_text(dir / "big.txt", text);
  EXPECT_EQ(run_cli("oracle " + (dir / "big.txt").string(), dir / "log"), 4);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  write_text(dir / "bad.json", R"({"agent": {"nonsense": 1}})");
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("no-such-command", dir / "log"), 2);
  EXPECT_EQ(run_cli("train --allocator random --out " + dir.string(), dir / "log"), 2);
}

TEST_F(Cli, SweepWithoutCheckpointExitsWithThree) {
  EXPECT_EQ(run_cli("sweep --config " + (dir / "small.json").string() + " --out " +
                        (dir / "out").string(),
                    dir / "log"),
            3);
}

TEST_F(Cli, TrainThenSweepAndRepeatable) {
  const std::string cfg = " --config " + (dir / "small.json").string();
  for (const char* run : {"a", "b"}) {
    const std::string out = (dir / run).string();
    ASSERT_EQ(run_cli("train --allocator ora" + cfg + " --out " + out, dir / "log"), 0)
        << slurp(dir / "log");
  }
  EXPECT_EQ(slurp(dir / "a" / "history_ora.csv"), slurp(dir / "b" / "history_ora.csv"));
  EXPECT_EQ(slurp(dir / "a" / "checkpoints" / "ora.ckpt"), slurp(dir / "b" / "checkpoints" / "ora.ckpt"));

  ASSERT_EQ(run_cli("sweep --train" + cfg + " --out " + (dir / "a").string(), dir / "log"), 0)
      << slurp(dir / "log");
  const std::string sweep = slurp(dir / "a" / "sweep_num_tasks.csv");
  EXPECT_EQ(sweep.rfind(kSweepCsvHeader, 0), 0u);
  int lines = 0;
  for (char ch : sweep) lines += ch == '\n';
  // Header + 2 values x 3 allocators x 2 seeds + 6 aggregates.
  EXPECT_EQ(lines, 1 + 12 + 6);

  ASSERT_EQ(run_cli("scenario" + cfg + " --seed 9 --out " + (dir / "a").string(), dir / "log"), 0);
  ASSERT_TRUE(fs::exists(dir / "a" / "scenario_9.txt"));
  ASSERT_EQ(run_cli("replay --allocator ora --scenario " + (dir / "a" / "scenario_9.txt").string() +
                        cfg + " --out " + (dir / "a").string(),
                    dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "a" / "episode_ora.csv"));
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  const fs::path env_out = dir / "from_env";
  const std::string cmd = "FOGSIM_OUT_DIR=\"" + env_out.string() + "\" \"" + FOGSIM_CLI_PATH +
                          "\" scenario --seed 3 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(env_out / "scenario_3.txt"));
}
