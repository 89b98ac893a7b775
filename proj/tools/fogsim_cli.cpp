// fogsim command-line driver: train, sweep, oracle, replay, scenario.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 missing artifact (checkpoint / input file), 4 brute-force guard violated.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fogsim/experiment.hpp"

namespace fs = std::filesystem;
using namespace fogsim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitGuard = 4;

struct MissingArtifact : Error {
  using Error::Error;
};

struct CommonOptions {
  std::string config_path;
  std::string allocator;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_experiment_config(o.config_path);
  if (!o.allocator.empty()) c.allocator = o.allocator;
  if (o.seed) {
    c.scenario.seed = *o.seed;
    c.agent.seed = *o.seed;
  }
  if (const char* env = std::getenv("FOGSIM_OUT_DIR"); env && *env) c.output_dir = env;
  if (!o.out.empty()) c.output_dir = o.out;
  validate(c);
  return c;
}

fs::path checkpoint_path(const ExperimentConfig& c, const std::string& name) {
  return fs::path(c.output_dir) / "checkpoints" / (name + ".ckpt");
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write '" + p.string() + "'");
  body(os);
}

OraAgent load_checkpoint(const fs::path& p, const SystemCapacity& cap) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingArtifact("missing checkpoint '" + p.string() + "'");
  OraAgent a = OraAgent::load(in, cap.total_blocks, cap.total_units);
  a.set_explore(false);
  return a;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig c = load_config(o);
  if (!is_learnable(c.allocator))
    throw InvalidConfig("allocator '" + c.allocator + "' has nothing to train");
  std::cerr << "training " << c.allocator << " for " << c.agent.epochs << " epochs\n";
  TrainedAgent t = train_allocator(c.allocator, c);
  const fs::path ckpt = checkpoint_path(c, c.allocator);
  const fs::path hist = fs::path(c.output_dir) / ("history_" + c.allocator + ".csv");
  write_file(ckpt, [&](std::ostream& os) { t.agent.save(os); });
  write_file(hist, [&](std::ostream& os) { write_history_csv(os, t.history); });
  std::cout << "checkpoint " << ckpt.string() << "\nhistory " << hist.string() << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& o, bool train_flag) {
  ExperimentConfig c = load_config(o);
  if (train_flag) c.train_on_the_fly = true;
  const SystemCapacity cap = capacity_from_table(c.scenario.capacity);
  std::map<std::string, std::unique_ptr<Allocator>> owned;
  std::map<std::string, Allocator*> policies;
  for (const auto& name : c.allocators) {
    if (is_learnable(name)) {
      const fs::path ckpt = checkpoint_path(c, name);
      if (fs::exists(ckpt)) {
        owned[name] = std::make_unique<OraAgent>(load_checkpoint(ckpt, cap));
      } else if (c.train_on_the_fly) {
        std::cerr << "training " << name << " on the fly\n";
        TrainedAgent t = train_allocator(name, c);
        write_file(ckpt, [&](std::ostream& os) { t.agent.save(os); });
        write_file(fs::path(c.output_dir) / ("history_" + name + ".csv"),
                   [&](std::ostream& os) { write_history_csv(os, t.history); });
        owned[name] = std::make_unique<OraAgent>(std::move(t.agent));
      } else {
        throw MissingArtifact("missing checkpoint '" + ckpt.string() +
                              "' (run train first or pass --train)");
      }
    } else {
      owned[name] = make_fixed_policy(name);
    }
    policies[name] = owned[name].get();
  }
  const SweepResult res = run_sweep(c, policies);
  const fs::path out = fs::path(c.output_dir) / ("sweep_" + to_string(c.sweep.variable) + ".csv");
  write_file(out, [&](std::ostream& os) { write_sweep_csv(os, res); });
  for (const SweepRow* r : res.aggregates())
    std::cout << to_string(r->variable) << '=' << format_double(r->value) << ' ' << r->allocator
              << " mean_delay=" << r->mean_total_s << " std=" << r->std_total_s
              << " drop_rate=" << r->drop_rate << '\n';
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_oracle(const std::string& instance) {
  std::ifstream in(instance);
  if (!in) throw MissingArtifact("cannot open instance '" + instance + "'");
  const Scenario sc = read_scenario(in);
  const StaticSolution sol = brute_force_static(sc.tasks, sc.capacity);
  std::cout << "id,x,y\n";
  for (std::size_t i = 0; i < sol.grants.size(); ++i)
    std::cout << sc.tasks[i].id << ',' << sol.grants[i].blocks << ',' << sol.grants[i].units << '\n';
  std::cout << "objective_s," << format_double(sol.objective_s) << '\n';
  return 0;
}

int cmd_replay(const CommonOptions& o, const std::string& scenario_path,
               const std::string& checkpoint) {
  const ExperimentConfig c = load_config(o);
  std::ifstream in(scenario_path);
  if (!in) throw MissingArtifact("cannot open scenario '" + scenario_path + "'");
  const Scenario sc = read_scenario(in);
  std::unique_ptr<Allocator> policy;
  if (is_learnable(c.allocator)) {
    const fs::path ckpt = checkpoint.empty() ? checkpoint_path(c, c.allocator) : fs::path(checkpoint);
    policy = std::make_unique<OraAgent>(load_checkpoint(ckpt, sc.capacity));
  } else {
    policy = make_fixed_policy(c.allocator);
  }
  EpisodeOptions opts;
  opts.release_mode = c.release_mode;
  const EpisodeReport rep = run_episode(sc, *policy, c.scenario.seed, opts);
  const fs::path out = fs::path(c.output_dir) / ("episode_" + c.allocator + ".csv");
  write_file(out, [&](std::ostream& os) { write_episode_csv(os, rep); });
  std::cout << "mean_delay_s " << format_double(rep.mean_total_s) << "\ndrops " << rep.drop_count
            << "\nwrote " << out.string() << '\n';
  return 0;
}

int cmd_scenario(const CommonOptions& o) {
  const ExperimentConfig c = load_config(o);
  const Scenario sc = generate(c.scenario);
  const fs::path out = fs::path(c.output_dir) / ("scenario_" + std::to_string(c.scenario.seed) + ".txt");
  write_file(out, [&](std::ostream& os) { write_scenario(os, sc); });
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

void add_common(CLI::App* sub, CommonOptions& o, bool with_allocator = true) {
  sub->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  if (with_allocator)
    sub->add_option("--allocator", o.allocator, "ora | tx-only | comp-only | random | oracle");
  sub->add_option("--seed", o.seed, "base seed for scenarios and agent");
  sub->add_option("--out", o.out, "output directory (overrides FOGSIM_OUT_DIR)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fog-assisted IoT joint radio/compute allocation simulator"};
  app.require_subcommand(1);

  CommonOptions train_o, sweep_o, replay_o, scen_o;
  bool sweep_train = false;
  std::string instance, scenario_path, replay_ckpt;

  auto* train = app.add_subcommand("train", "train a learnable allocator, write checkpoint + history");
  add_common(train, train_o);
  auto* sweep = app.add_subcommand("sweep", "evaluate allocators over a sweep, write CSV");
  add_common(sweep, sweep_o, false);
  sweep->add_flag("--train", sweep_train, "train missing checkpoints on the fly");
  auto* oracle = app.add_subcommand("oracle", "exact brute-force allocation of a static instance");
  oracle->add_option("instance", instance, "scenario-format instance file")->required();
  auto* replay = app.add_subcommand("replay", "run one scenario file with one allocator");
  add_common(replay, replay_o);
  replay->add_option("--scenario", scenario_path, "scenario file")->required();
  replay->add_option("--checkpoint", replay_ckpt, "checkpoint for learnable allocators");
  auto* scen = app.add_subcommand("scenario", "generate and write a scenario file");
  add_common(scen, scen_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_o);
    if (*sweep) return cmd_sweep(sweep_o, sweep_train);
    if (*oracle) return cmd_oracle(instance);
    if (*replay) return cmd_replay(replay_o, scenario_path, replay_ckpt);
    if (*scen) return cmd_scenario(scen_o);
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitMissing;
  } catch (const InstanceTooLarge& e) {
    std::cerr << "guard violation: " << e.what() << '\n';
    return kExitGuard;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
