#pragma once

// Experiment orchestration: JSON configuration, allocator construction by
// name, training of the learnable allocators, and evaluation sweeps with
// per-seed rows plus seed aggregates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fogsim/allocators.hpp"
#include "fogsim/ora_agent.hpp"

namespace fogsim {

enum class SweepVariable { num_tasks, data_size_mean, intensity_mean };

inline std::string to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::num_tasks: return "num_tasks";
    case SweepVariable::data_size_mean: return "data_size_mean";
    case SweepVariable::intensity_mean: return "intensity_mean";
  }
  return "num_tasks";
}

inline SweepVariable sweep_variable_from_string(const std::string& s) {
  if (s == "num_tasks") return SweepVariable::num_tasks;
  if (s == "data_size_mean") return SweepVariable::data_size_mean;
  if (s == "intensity_mean") return SweepVariable::intensity_mean;
  throw InvalidConfig("unknown sweep variable '" + s + "'");
}

struct SweepSpec {
  SweepVariable variable = SweepVariable::num_tasks;
  std::vector<double> values{300, 400, 500, 600, 700};
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  AgentConfig agent;
  ReleaseMode release_mode = ReleaseMode::whole;
  std::string allocator = "ora";
  std::vector<std::string> allocators{"ora", "tx-only", "comp-only"};
  SweepSpec sweep;
  std::vector<std::uint64_t> seeds{100001, 100002, 100003, 100004, 100005};
  std::string output_dir = "out";
  bool train_on_the_fly = false;
};

inline const std::set<std::string>& known_allocators() {
  static const std::set<std::string> names{"ora", "tx-only", "comp-only", "random", "oracle"};
  return names;
}

inline bool is_learnable(const std::string& name) {
  return name == "ora" || name == "tx-only" || name == "comp-only";
}

inline void validate(const ExperimentConfig& c) {
  validate(c.scenario);
  try {
    capacity_from_table(c.scenario.capacity);
  } catch (const InvalidCapacity& e) {
    throw InvalidConfig(e.what());
  }
  validate(c.agent);
  if (!known_allocators().count(c.allocator))
    throw InvalidConfig("unknown allocator '" + c.allocator + "'");
  for (const auto& a : c.allocators)
    if (!known_allocators().count(a)) throw InvalidConfig("unknown allocator '" + a + "'");
  if (c.seeds.empty()) throw InvalidConfig("at least one evaluation seed is required");
  for (double v : c.sweep.values)
    if (!(v > 0.0)) throw InvalidConfig("sweep values must be positive");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

// Copies json[key] into out when present.
template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!j.is_object()) throw InvalidConfig(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* allowed : keys) ok = ok || k == allowed;
    if (!ok) throw InvalidConfig("unknown key '" + k + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  ExperimentConfig c;
  try {
    detail::reject_unknown(j,
                           {"scenario", "capacity", "agent", "engine", "allocator", "allocators",
                            "sweep", "seeds", "output_dir", "train_on_the_fly"},
                           "config");
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      detail::reject_unknown(s,
                             {"seed", "area_km", "num_locations", "num_tasks", "horizon_s",
                              "data_size_mean_bits", "data_size_std_bits", "intensity_mean",
                              "intensity_std", "tx_power_w", "noise_dbm", "pathloss_a",
                              "pathloss_b"},
                             "scenario");
      auto& sc = c.scenario;
      read_opt(s, "seed", sc.seed);
      read_opt(s, "area_km", sc.area_km);
      read_opt(s, "num_locations", sc.num_locations);
      read_opt(s, "num_tasks", sc.num_tasks);
      read_opt(s, "horizon_s", sc.horizon_s);
      read_opt(s, "data_size_mean_bits", sc.data_size_mean_bits);
      read_opt(s, "data_size_std_bits", sc.data_size_std_bits);
      read_opt(s, "intensity_mean", sc.intensity_mean);
      read_opt(s, "intensity_std", sc.intensity_std);
      read_opt(s, "tx_power_w", sc.tx_power_w);
      read_opt(s, "noise_dbm", sc.noise_dbm);
      read_opt(s, "pathloss_a", sc.pathloss_a);
      read_opt(s, "pathloss_b", sc.pathloss_b);
    }
    if (j.contains("capacity")) {
      const auto& s = j.at("capacity");
      detail::reject_unknown(s,
                             {"bandwidth_hz", "block_hz", "fog_cycles_per_s", "unit_cycles_per_s",
                              "qos_s", "drop_penalty_s", "shannon_plus_one"},
                             "capacity");
      auto& cap = c.scenario.capacity;
      read_opt(s, "bandwidth_hz", cap.bandwidth_hz);
      read_opt(s, "block_hz", cap.block_hz);
      read_opt(s, "fog_cycles_per_s", cap.fog_cycles_per_s);
      read_opt(s, "unit_cycles_per_s", cap.unit_cycles_per_s);
      read_opt(s, "qos_s", cap.qos_s);
      read_opt(s, "drop_penalty_s", cap.drop_penalty_s);
      read_opt(s, "shannon_plus_one", cap.shannon_plus_one);
    }
    if (j.contains("agent")) {
      const auto& s = j.at("agent");
      detail::reject_unknown(s,
                             {"gamma", "epochs", "batch_size", "memory_capacity", "entropy_coef",
                              "use_discounted_target", "action_masking", "seed", "hidden_width",
                              "actor_step_size", "critic_step_size", "beta1", "beta2", "epsilon"},
                             "agent");
      auto& a = c.agent;
      read_opt(s, "gamma", a.gamma);
      read_opt(s, "epochs", a.epochs);
      read_opt(s, "batch_size", a.batch_size);
      read_opt(s, "memory_capacity", a.memory_capacity);
      read_opt(s, "entropy_coef", a.entropy_coef);
      read_opt(s, "use_discounted_target", a.use_discounted_target);
      read_opt(s, "action_masking", a.action_masking);
      read_opt(s, "seed", a.seed);
      read_opt(s, "hidden_width", a.hidden_width);
      read_opt(s, "actor_step_size", a.actor_optimizer.step_size);
      read_opt(s, "critic_step_size", a.critic_optimizer.step_size);
      for (auto* opt : {&a.actor_optimizer, &a.critic_optimizer}) {
        read_opt(s, "beta1", opt->beta1);
        read_opt(s, "beta2", opt->beta2);
        read_opt(s, "epsilon", opt->epsilon);
      }
    }
    if (j.contains("engine")) {
      const auto& s = j.at("engine");
      detail::reject_unknown(s, {"release_mode"}, "engine");
      std::string mode = "whole";
      read_opt(s, "release_mode", mode);
      if (mode == "whole") c.release_mode = ReleaseMode::whole;
      else if (mode == "phased") c.release_mode = ReleaseMode::phased;
      else throw InvalidConfig("release_mode must be 'whole' or 'phased'");
    }
    read_opt(j, "allocator", c.allocator);
    read_opt(j, "allocators", c.allocators);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      detail::reject_unknown(s, {"variable", "values"}, "sweep");
      std::string var = to_string(c.sweep.variable);
      read_opt(s, "variable", var);
      c.sweep.variable = sweep_variable_from_string(var);
      read_opt(s, "values", c.sweep.values);
    }
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "train_on_the_fly", c.train_on_the_fly);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("config '" + path + "': " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Allocators and training
// ---------------------------------------------------------------------------

/// Scenario realization for training epoch `epoch`: base seed + epoch.
inline ScenarioFactory training_scenarios(const ScenarioConfig& base) {
  return [base](int epoch) {
    ScenarioConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(epoch);
    return generate(c);
  };
}

/// Agent configuration for `name` with state scales and fixed shares filled
/// in from the scenario distribution.
inline AgentConfig agent_config_for(const std::string& name, const ExperimentConfig& exp) {
  AgentConfig a = exp.agent;
  a.data_scale_bits = exp.scenario.data_size_mean_bits;
  a.cycles_scale = exp.scenario.data_size_mean_bits * exp.scenario.intensity_mean;
  const SystemCapacity cap = capacity_from_table(exp.scenario.capacity);
  if (name == "ora") {
    a.mode = HeadMode::joint;
  } else if (name == "tx-only" || name == "comp-only") {
    const int concurrency = expected_concurrency(exp.scenario);
    if (name == "tx-only") {
      a.mode = HeadMode::blocks_only;
      a.fixed_units = fixed_share(cap.total_units, concurrency);
    } else {
      a.mode = HeadMode::units_only;
      a.fixed_blocks = fixed_share(cap.total_blocks, concurrency);
    }
  } else {
    throw InvalidConfig("'" + name + "' is not a learnable allocator");
  }
  return a;
}

inline OraAgent make_agent(const std::string& name, const ExperimentConfig& exp) {
  const SystemCapacity cap = capacity_from_table(exp.scenario.capacity);
  return OraAgent(agent_config_for(name, exp), cap.total_blocks, cap.total_units);
}

inline std::unique_ptr<Allocator> make_fixed_policy(const std::string& name) {
  if (name == "random") return std::make_unique<RandomAllocator>();
  if (name == "oracle") return std::make_unique<GreedyOracleAllocator>();
  throw InvalidConfig("'" + name + "' needs training or a checkpoint");
}

struct TrainedAgent {
  OraAgent agent;
  TrainingHistory history;
};

inline TrainedAgent train_allocator(const std::string& name, const ExperimentConfig& exp) {
  OraAgent agent = make_agent(name, exp);
  EpisodeOptions opts;
  opts.release_mode = exp.release_mode;
  TrainingHistory h = agent.train(training_scenarios(exp.scenario), exp.agent.epochs, opts);
  agent.set_explore(false);
  return TrainedAgent{std::move(agent), std::move(h)};
}

/// Greedy (explore = false) evaluation of one scenario realization.
inline EpisodeReport evaluate(Allocator& allocator, const ScenarioConfig& scenario,
                              std::uint64_t seed, ReleaseMode mode = ReleaseMode::whole) {
  ScenarioConfig c = scenario;
  c.seed = seed;
  if (auto* agent = dynamic_cast<OraAgent*>(&allocator)) agent->set_explore(false);
  EpisodeOptions opts;
  opts.release_mode = mode;
  return run_episode(generate(c), allocator, seed, opts);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Scenario with the swept quantity set to `value`. Data size and intensity
/// keep their coefficient of variation.
inline ScenarioConfig apply_sweep_value(ScenarioConfig c, SweepVariable var, double value) {
  switch (var) {
    case SweepVariable::num_tasks:
      c.num_tasks = static_cast<int>(std::lround(value));
      break;
    case SweepVariable::data_size_mean:
      c.data_size_std_bits *= value / c.data_size_mean_bits;
      c.data_size_mean_bits = value;
      break;
    case SweepVariable::intensity_mean:
      c.intensity_std *= value / c.intensity_mean;
      c.intensity_mean = value;
      break;
  }
  return c;
}

struct SweepRow {
  std::string kind;  // "seed" or "aggregate"
  SweepVariable variable = SweepVariable::num_tasks;
  double value = 0.0;
  std::string allocator;
  std::uint64_t seed = 0;  // number of seeds for aggregate rows
  double mean_total_s = 0.0, std_total_s = 0.0;
  double mean_transmission_s = 0.0, std_transmission_s = 0.0;
  double mean_computing_s = 0.0, std_computing_s = 0.0;
  double drop_rate = 0.0, std_drop_rate = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // per-seed rows first, then aggregates

  std::vector<const SweepRow*> aggregates() const {
    std::vector<const SweepRow*> out;
    for (const auto& r : rows)
      if (r.kind == "aggregate") out.push_back(&r);
    return out;
  }
  const SweepRow* aggregate(const std::string& allocator, double value) const {
    for (const auto& r : rows)
      if (r.kind == "aggregate" && r.allocator == allocator && r.value == value) return &r;
    return nullptr;
  }
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace detail

/// Recomputes aggregate rows from per-seed rows.
inline std::vector<SweepRow> aggregate_rows(const std::vector<SweepRow>& seed_rows) {
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& r : seed_rows) {
    const auto key = std::make_pair(r.allocator, r.value);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::vector<SweepRow> out;
  for (const auto& [alloc, value] : keys) {
    std::vector<double> tot, tx, comp, drop;
    SweepRow agg;
    for (const auto& r : seed_rows) {
      if (r.kind != "seed" || r.allocator != alloc || r.value != value) continue;
      agg.variable = r.variable;
      tot.push_back(r.mean_total_s);
      tx.push_back(r.mean_transmission_s);
      comp.push_back(r.mean_computing_s);
      drop.push_back(r.drop_rate);
    }
    agg.kind = "aggregate";
    agg.value = value;
    agg.allocator = alloc;
    agg.seed = tot.size();
    const auto a = detail::mean_std(tot), b = detail::mean_std(tx), c = detail::mean_std(comp),
               d = detail::mean_std(drop);
    agg.mean_total_s = a.mean;
    agg.std_total_s = a.std;
    agg.mean_transmission_s = b.mean;
    agg.std_transmission_s = b.std;
    agg.mean_computing_s = c.mean;
    agg.std_computing_s = c.std;
    agg.drop_rate = d.mean;
    agg.std_drop_rate = d.std;
    out.push_back(agg);
  }
  return out;
}

/// Evaluates every (value, allocator, seed) cell. `policies` maps allocator
/// names to ready-to-evaluate policies.
inline SweepResult run_sweep(const ExperimentConfig& exp,
                             const std::map<std::string, Allocator*>& policies) {
  SweepResult res;
  for (double value : exp.sweep.values) {
    const ScenarioConfig sc = apply_sweep_value(exp.scenario, exp.sweep.variable, value);
    for (const auto& name : exp.allocators) {
      auto it = policies.find(name);
      if (it == policies.end() || !it->second) throw InvalidConfig("no policy for '" + name + "'");
      for (std::uint64_t seed : exp.seeds) {
        const EpisodeReport rep = evaluate(*it->second, sc, seed, exp.release_mode);
        SweepRow row;
        row.kind = "seed";
        row.variable = exp.sweep.variable;
        row.value = value;
        row.allocator = name;
        row.seed = seed;
        row.mean_total_s = rep.mean_total_s;
        row.mean_transmission_s = rep.mean_transmission_s;
        row.mean_computing_s = rep.mean_computing_s;
        row.drop_rate = rep.drop_rate();
        res.rows.push_back(row);
      }
    }
  }
  auto agg = aggregate_rows(res.rows);
  res.rows.insert(res.rows.end(), agg.begin(), agg.end());
  return res;
}

inline constexpr const char* kSweepCsvHeader =
    "kind,variable,value,allocator,seed,mean_total_s,std_total_s,mean_transmission_s,"
    "std_transmission_s,mean_computing_s,std_computing_s,drop_rate,std_drop_rate";

inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  os << kSweepCsvHeader << '\n';
  for (const auto& r : res.rows) {
    os << r.kind << ',' << to_string(r.variable) << ',' << format_double(r.value) << ','
       << r.allocator << ',' << r.seed << ',' << format_double(r.mean_total_s) << ','
       << format_double(r.std_total_s) << ',' << format_double(r.mean_transmission_s) << ','
       << format_double(r.std_transmission_s) << ',' << format_double(r.mean_computing_s) << ','
       << format_double(r.std_computing_s) << ',' << format_double(r.drop_rate) << ','
       << format_double(r.std_drop_rate) << '\n';
  }
}

}  // namespace fogsim
