#pragma once

// Non-learning allocation policies, the fixed-share rule used by the
// single-resource baselines, and the exhaustive solver for small static
// instances of the mean-delay problem.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "fogsim/engine.hpp"

namespace fogsim {

/// Uniform over the non-zero grants that fit the free resources.
class RandomAllocator final : public Allocator {
 public:
  JointAction decide(const ObsState& s, std::mt19937_64& rng) override {
    const auto draw = [&](int hi) {
      if (hi < 1) return 0;
      return std::uniform_int_distribution<int>(1, hi)(rng);
    };
    const int x = draw(s.remaining_blocks);
    const int y = draw(s.remaining_units);
    return {x, y};
  }
  std::string name() const override { return "random"; }
};

/// Myopic exact policy: the lone-task optimum is everything that is free,
/// since both delays strictly decrease in their resource.
class GreedyOracleAllocator final : public Allocator {
 public:
  JointAction decide(const ObsState& s, std::mt19937_64&) override {
    return {s.remaining_blocks, s.remaining_units};
  }
  std::string name() const override { return "oracle"; }
};

/// Always requests the same grant; the engine clamps it.
class FixedAllocator final : public Allocator {
 public:
  explicit FixedAllocator(JointAction a) : action_(a) {}
  JointAction decide(const ObsState&, std::mt19937_64&) override { return action_; }
  std::string name() const override { return "fixed"; }

 private:
  JointAction action_;
};

/// Equal static share of a resource among the expected concurrent tasks.
inline int fixed_share(int total, int expected_concurrency) {
  if (total < 1 || expected_concurrency < 1)
    throw InvalidConfig("fixed_share needs total >= 1 and concurrency >= 1");
  return std::max(1, total / expected_concurrency);
}

/// Expected number of tasks in the system: arrival rate times the mean
/// holding time of served tasks in a pilot run with the random policy.
inline int expected_concurrency(const ScenarioConfig& config, std::uint64_t pilot_seed = 0) {
  ScenarioConfig pilot = config;
  pilot.seed = config.seed + pilot_seed;
  const Scenario sc = generate(pilot);
  RandomAllocator random;
  const EpisodeReport rep = run_episode(sc, random, pilot.seed);
  const double rate = static_cast<double>(config.num_tasks) / config.horizon_s;
  const double mean_hold = rep.mean_transmission_s + rep.mean_computing_s;
  return std::max(1, static_cast<int>(std::ceil(rate * mean_hold)));
}

struct StaticSolution {
  std::vector<ResourceGrants> grants;
  double objective_s = 0.0;
};

inline constexpr int kBruteForceMaxTasks = 4;
inline constexpr int kBruteForceMaxResource = 8;

namespace detail {

// All vectors of `n` non-negative ints with sum <= budget, lexicographic order.
inline void enumerate_bounded(int n, int budget, std::vector<int>& cur,
                              std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= budget; ++v) {
    cur.push_back(v);
    enumerate_bounded(n, budget - v, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

/// Exhaustive minimizer of the mean delay for simultaneous tasks. Deadline
/// violations are priced at the drop penalty; ties go to the lexicographically
/// smallest (x_1..x_n, y_1..y_n).
inline StaticSolution brute_force_static(std::span<const TaskSpec> tasks,
                                         const SystemCapacity& cap) {
  if (tasks.empty()) throw EmptyInstance("no tasks to allocate");
  if (static_cast<int>(tasks.size()) > kBruteForceMaxTasks ||
      cap.total_blocks > kBruteForceMaxResource || cap.total_units > kBruteForceMaxResource)
    throw InstanceTooLarge("brute force limited to 4 tasks and M, N <= 8");
  validate(cap);
  const int n = static_cast<int>(tasks.size());

  std::vector<std::vector<int>> xs, ys;
  std::vector<int> scratch;
  detail::enumerate_bounded(n, cap.total_blocks, scratch, xs);
  detail::enumerate_bounded(n, cap.total_units, scratch, ys);

  // delay[i][x][y]
  const int w = cap.total_units + 1;
  std::vector<double> delay(static_cast<std::size_t>(n * (cap.total_blocks + 1) * w));
  for (int i = 0; i < n; ++i)
    for (int x = 0; x <= cap.total_blocks; ++x)
      for (int y = 0; y <= cap.total_units; ++y)
        delay[static_cast<std::size_t>((i * (cap.total_blocks + 1) + x) * w + y)] =
            task_delay(tasks[static_cast<std::size_t>(i)], {x, y}, cap).total_s;

  double best = std::numeric_limits<double>::infinity();
  const std::vector<int>* best_x = nullptr;
  const std::vector<int>* best_y = nullptr;
  for (const auto& xv : xs) {
    for (const auto& yv : ys) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        sum += delay[static_cast<std::size_t>((i * (cap.total_blocks + 1) + xv[static_cast<std::size_t>(i)]) * w +
                                              yv[static_cast<std::size_t>(i)])];
      const double obj = sum / static_cast<double>(n);
      if (obj < best) {
        best = obj;
        best_x = &xv;
        best_y = &yv;
      }
    }
  }
  StaticSolution sol;
  sol.objective_s = best;
  for (int i = 0; i < n; ++i)
    sol.grants.push_back({(*best_x)[static_cast<std::size_t>(i)], (*best_y)[static_cast<std::size_t>(i)]});
  return sol;
}

}  // namespace fogsim
