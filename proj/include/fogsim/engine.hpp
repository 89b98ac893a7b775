#pragma once

// Discrete-event episode runner. Arrivals query an allocator, feasible tasks
// hold their grant in the resource ledger until departure, and each decision
// becomes an (s, a, r, s') transition once the next arrival is observed.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fogsim/fog_model.hpp"
#include "fogsim/scenario.hpp"

namespace fogsim {

/// What the agent sees when a task arrives: free blocks and units, plus the
/// task's data size and computation size.
struct ObsState {
  int remaining_blocks = 0;
  int remaining_units = 0;
  double data_size_bits = 0.0;
  double computation_cycles = 0.0;

  friend bool operator==(const ObsState&, const ObsState&) = default;
};

struct JointAction {
  int blocks = 0;
  int units = 0;

  friend bool operator==(const JointAction&, const JointAction&) = default;
};

struct Transition {
  ObsState state;
  JointAction action;
  double reward = 0.0;
  ObsState next_state;
};

/// A resource allocation policy queried once per arriving task.
class Allocator {
 public:
  virtual ~Allocator() = default;
  virtual JointAction decide(const ObsState& state, std::mt19937_64& rng) = 0;
  /// Called once per completed transition; learning policies store it.
  virtual void observe(const Transition&) {}
  virtual std::string name() const = 0;
};

enum class ReleaseMode {
  whole,   // blocks and units held for the full task lifetime
  phased,  // blocks freed after the upload, units after computing
};

/// Time-indexed reservations against M blocks and N units.
class ResourceLedger {
 public:
  struct Reservation {
    std::int64_t task_id;
    int blocks;
    int units;
    double start_s;
  };

  ResourceLedger(int total_blocks, int total_units)
      : total_blocks_(total_blocks), total_units_(total_units) {
    if (total_blocks < 1 || total_units < 1) throw InvalidCapacity("ledger needs M, N >= 1");
  }

  int total_blocks() const { return total_blocks_; }
  int total_units() const { return total_units_; }
  int used_blocks() const { return used_blocks_; }
  int used_units() const { return used_units_; }
  int free_blocks() const { return total_blocks_ - used_blocks_; }
  int free_units() const { return total_units_ - used_units_; }
  const std::map<std::int64_t, Reservation>& active() const { return active_; }

  /// Reserves a grant; the releases are scheduled as departure events.
  void reserve(std::int64_t task_id, int blocks, int units, double start_s,
               double blocks_release_s, double units_release_s) {
    if (blocks > free_blocks() || units > free_units() || blocks < 0 || units < 0)
      throw std::logic_error("ledger overcommitted for task " + std::to_string(task_id));
    if (!(blocks_release_s > start_s) || !(units_release_s > start_s))
      throw std::logic_error("release must come after reservation");
    used_blocks_ += blocks;
    used_units_ += units;
    active_[task_id] = Reservation{task_id, blocks, units, start_s};
    if (blocks_release_s == units_release_s) {
      pending_.push(Release{blocks_release_s, task_id, blocks, units});
    } else {
      pending_.push(Release{blocks_release_s, task_id, blocks, 0});
      pending_.push(Release{units_release_s, task_id, 0, units});
    }
  }

  /// Processes every departure with time <= now. Returns the number released.
  int release_until(double now) {
    int n = 0;
    while (!pending_.empty() && pending_.top().time_s <= now) {
      apply(pending_.top());
      pending_.pop();
      ++n;
    }
    return n;
  }

  void release_all() {
    while (!pending_.empty()) {
      apply(pending_.top());
      pending_.pop();
    }
  }

  bool has_pending() const { return !pending_.empty(); }
  double next_release_s() const { return pending_.top().time_s; }

 private:
  struct Release {
    double time_s;
    std::int64_t task_id;
    int blocks;
    int units;
  };
  struct Later {
    bool operator()(const Release& a, const Release& b) const {
      if (a.time_s != b.time_s) return a.time_s > b.time_s;
      return a.task_id > b.task_id;
    }
  };

  void apply(const Release& r) {
    used_blocks_ -= r.blocks;
    used_units_ -= r.units;
    auto it = active_.find(r.task_id);
    if (it != active_.end()) {
      it->second.blocks -= r.blocks;
      it->second.units -= r.units;
      if (it->second.blocks == 0 && it->second.units == 0) active_.erase(it);
    }
  }

  int total_blocks_;
  int total_units_;
  int used_blocks_ = 0;
  int used_units_ = 0;
  std::map<std::int64_t, Reservation> active_;
  std::priority_queue<Release, std::vector<Release>, Later> pending_;
};

inline ObsState build_state(const ResourceLedger& ledger, const TaskSpec& next_task) {
  return ObsState{ledger.free_blocks(), ledger.free_units(), next_task.data_size_bits,
                  next_task.computation_cycles};
}

inline double reward_of(const DelayBreakdown& d) { return -d.total_s; }

struct TaskRecord {
  std::int64_t id = 0;
  double arrival_s = 0.0;
  ResourceGrants grants;  // after clamping
  DelayBreakdown delay;
  double reward = 0.0;
};

struct EpisodeReport {
  std::vector<TaskRecord> tasks;
  std::vector<Transition> transitions;
  double mean_total_s = 0.0;
  double mean_transmission_s = 0.0;  // over non-dropped tasks
  double mean_computing_s = 0.0;     // over non-dropped tasks
  int drop_count = 0;
  int peak_used_blocks = 0;
  int peak_used_units = 0;

  double drop_rate() const {
    return tasks.empty() ? 0.0 : static_cast<double>(drop_count) / static_cast<double>(tasks.size());
  }
};

struct LedgerProbe {
  double time_s;
  int used_blocks;
  int used_units;
};

struct EpisodeOptions {
  ReleaseMode release_mode = ReleaseMode::whole;
  /// Invoked after every event that changes the ledger.
  std::function<void(const LedgerProbe&)> on_event;
};

inline EpisodeReport run_episode(const Scenario& scenario, Allocator& allocator,
                                 std::uint64_t seed, const EpisodeOptions& options = {}) {
  if (scenario.tasks.empty()) throw EmptyInstance("scenario has no tasks");
  const SystemCapacity& cap = scenario.capacity;
  ResourceLedger ledger(cap.total_blocks, cap.total_units);
  std::mt19937_64 rng(seed);
  EpisodeReport report;
  report.tasks.reserve(scenario.tasks.size());
  report.transitions.reserve(scenario.tasks.size());

  const auto probe = [&](double t) {
    report.peak_used_blocks = std::max(report.peak_used_blocks, ledger.used_blocks());
    report.peak_used_units = std::max(report.peak_used_units, ledger.used_units());
    if (options.on_event) options.on_event(LedgerProbe{t, ledger.used_blocks(), ledger.used_units()});
  };
  // Departures at the same instant as an arrival are released first.
  const auto drain_until = [&](double t) {
    while (ledger.has_pending() && ledger.next_release_s() <= t) {
      const double rt = ledger.next_release_s();
      ledger.release_until(rt);
      probe(rt);
    }
  };

  bool have_pending_transition = false;
  Transition pending;
  double sum_tx = 0.0, sum_comp = 0.0, sum_total = 0.0;

  for (const TaskSpec& task : scenario.tasks) {
    drain_until(task.arrival_time);
    const ObsState state = build_state(ledger, task);
    if (have_pending_transition) {
      pending.next_state = state;
      report.transitions.push_back(pending);
      allocator.observe(pending);
    }

    const JointAction action = allocator.decide(state, rng);
    if (action.blocks < 0 || action.units < 0 || action.blocks > cap.total_blocks ||
        action.units > cap.total_units)
      throw ProtocolViolation(allocator.name() + " returned (" + std::to_string(action.blocks) +
                              ", " + std::to_string(action.units) + ") outside capacity");

    const ResourceGrants grant{std::min(action.blocks, state.remaining_blocks),
                               std::min(action.units, state.remaining_units)};
    const DelayBreakdown delay = task_delay(task, grant, cap);
    if (!delay.dropped) {
      const double done = task.arrival_time + delay.total_s;
      const double blocks_done = options.release_mode == ReleaseMode::phased
                                     ? task.arrival_time + delay.transmission_s
                                     : done;
      ledger.reserve(task.id, grant.blocks, grant.units, task.arrival_time, blocks_done, done);
      probe(task.arrival_time);
      sum_tx += delay.transmission_s;
      sum_comp += delay.computing_s;
    } else {
      ++report.drop_count;
    }
    sum_total += delay.total_s;
    const double r = reward_of(delay);
    report.tasks.push_back(TaskRecord{task.id, task.arrival_time, grant, delay, r});
    pending = Transition{state, action, r, {}};
    have_pending_transition = true;
  }

  ledger.release_all();
  probe(scenario.tasks.back().arrival_time);
  if (ledger.used_blocks() != 0 || ledger.used_units() != 0)
    throw std::logic_error("resources leaked at episode end");
  pending.next_state = build_state(ledger, scenario.tasks.back());
  report.transitions.push_back(pending);
  allocator.observe(pending);

  const auto n = static_cast<double>(report.tasks.size());
  const auto kept = static_cast<double>(report.tasks.size() - static_cast<std::size_t>(report.drop_count));
  report.mean_total_s = sum_total / n;
  report.mean_transmission_s = kept > 0 ? sum_tx / kept : 0.0;
  report.mean_computing_s = kept > 0 ? sum_comp / kept : 0.0;
  return report;
}

inline constexpr const char* kEpisodeCsvHeader = "id,arrival_s,x,y,dt_s,dc_s,d_s,dropped,reward";

inline void write_episode_csv(std::ostream& os, const EpisodeReport& report) {
  os << kEpisodeCsvHeader << '\n';
  for (const auto& t : report.tasks) {
    os << t.id << ',' << format_double(t.arrival_s) << ',' << t.grants.blocks << ','
       << t.grants.units << ',' << format_double(t.delay.transmission_s) << ','
       << format_double(t.delay.computing_s) << ',' << format_double(t.delay.total_s) << ','
       << (t.delay.dropped ? 1 : 0) << ',' << format_double(t.reward) << '\n';
  }
}

}  // namespace fogsim
