#pragma once

// Delay model of a single fog-assisted IoT cell: uplink spectral efficiency,
// per-task transmission and computing delays, the QoS deadline with its drop
// penalty, and the mean-delay objective over a batch of tasks.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "fogsim/errors.hpp"

namespace fogsim {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

struct LinkBudget {
  double tx_power_w = 0.2;
  double channel_gain = 1.0;  // linear, <= 1
  double noise_power_w = dbm_to_watts(-104.0);

  double snr() const { return tx_power_w * channel_gain / noise_power_w; }
};

inline void validate(const LinkBudget& link) {
  if (!(link.tx_power_w > 0.0) || !(link.channel_gain > 0.0) || !(link.noise_power_w > 0.0))
    throw InvalidConfig("link budget fields must be strictly positive");
  if (link.channel_gain > 1.0) throw InvalidConfig("channel gain must not exceed 1");
}

struct TaskSpec {
  std::int64_t id = 0;
  double arrival_time = 0.0;
  double data_size_bits = 0.0;
  double intensity = 0.0;  // cycles per bit
  double computation_cycles = 0.0;
  LinkBudget link;
};

/// Builds a task whose computation size is derived from its data size.
inline TaskSpec make_task(std::int64_t id, double arrival_s, double data_bits, double intensity,
                          LinkBudget link) {
  TaskSpec t;
  t.id = id;
  t.arrival_time = arrival_s;
  t.data_size_bits = data_bits;
  t.intensity = intensity;
  t.computation_cycles = intensity * data_bits;
  t.link = link;
  return t;
}

inline void validate(const TaskSpec& t) {
  if (!(t.data_size_bits > 0.0)) throw InvalidConfig("task data size must be positive");
  if (!(t.intensity > 0.0)) throw InvalidConfig("task intensity must be positive");
  if (t.computation_cycles != t.intensity * t.data_size_bits)
    throw InvalidConfig("task computation size must equal intensity * data size");
  validate(t.link);
}

struct ResourceGrants {
  int blocks = 0;
  int units = 0;

  friend bool operator==(const ResourceGrants&, const ResourceGrants&) = default;
  friend auto operator<=>(const ResourceGrants&, const ResourceGrants&) = default;
};

struct SystemCapacity {
  double block_width_hz = 1.8e5;
  double unit_cycles_per_s = 1.0e7;
  int total_blocks = 27;
  int total_units = 30;
  double qos_deadline_s = 1.0;
  double drop_penalty_s = 10.0;
  /// true: log2(1 + SNR); false: log2(SNR) as literally written.
  bool shannon_plus_one = true;
};

inline void validate(const SystemCapacity& cap) {
  if (!(cap.block_width_hz > 0.0) || !(cap.unit_cycles_per_s > 0.0))
    throw InvalidCapacity("resource granularities must be positive");
  if (cap.total_blocks < 1 || cap.total_units < 1)
    throw InvalidCapacity("capacity needs at least one block and one unit");
  if (!(cap.qos_deadline_s > 0.0)) throw InvalidCapacity("QoS deadline must be positive");
  if (!(cap.drop_penalty_s >= cap.qos_deadline_s))
    throw InvalidCapacity("drop penalty must be at least the QoS deadline");
}

struct DelayBreakdown {
  double transmission_s = 0.0;
  double computing_s = 0.0;
  double total_s = 0.0;
  bool dropped = false;
};

/// Uplink spectral efficiency in bit/s/Hz.
inline double spectral_efficiency(const LinkBudget& link, bool plus_one = true) {
  const double snr = link.snr();
  return plus_one ? std::log2(1.0 + snr) : std::log2(snr);
}

inline double transmission_delay(const TaskSpec& task, int blocks, const SystemCapacity& cap) {
  if (blocks < 1) throw InfeasibleAllocation("zero resource blocks give a zero uplink rate");
  const double eta = spectral_efficiency(task.link, cap.shannon_plus_one);
  if (!(eta > 0.0)) throw InfeasibleAllocation("non-positive spectral efficiency");
  return task.data_size_bits / (blocks * cap.block_width_hz * eta);
}

inline double computing_delay(const TaskSpec& task, int units, const SystemCapacity& cap) {
  if (units < 1) throw InfeasibleAllocation("zero computation units never finish the task");
  return task.computation_cycles / (units * cap.unit_cycles_per_s);
}

inline DelayBreakdown dropped_breakdown(const SystemCapacity& cap) {
  return DelayBreakdown{0.0, 0.0, cap.drop_penalty_s, true};
}

/// Delay of one task under a grant. Zero grants, a non-positive rate, or a
/// missed deadline all yield a drop charged at the penalty delay.
inline DelayBreakdown task_delay(const TaskSpec& task, ResourceGrants grants,
                                 const SystemCapacity& cap) {
  if (grants.blocks < 1 || grants.units < 1) return dropped_breakdown(cap);
  if (!(spectral_efficiency(task.link, cap.shannon_plus_one) > 0.0)) return dropped_breakdown(cap);
  DelayBreakdown d;
  d.transmission_s = transmission_delay(task, grants.blocks, cap);
  d.computing_s = computing_delay(task, grants.units, cap);
  d.total_s = d.transmission_s + d.computing_s;
  if (!(d.total_s <= cap.qos_deadline_s)) return dropped_breakdown(cap);
  return d;
}

inline bool qos_feasible(const TaskSpec& task, ResourceGrants grants, const SystemCapacity& cap) {
  return !task_delay(task, grants, cap).dropped;
}

/// Mean per-task delay; dropped tasks count at the drop penalty.
inline double objective_value(std::span<const TaskSpec> tasks,
                              std::span<const ResourceGrants> grants, const SystemCapacity& cap) {
  if (tasks.empty()) throw EmptyInstance("objective of an empty task set");
  if (tasks.size() != grants.size()) throw ShapeError("tasks and grants differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) sum += task_delay(tasks[i], grants[i], cap).total_s;
  return sum / static_cast<double>(tasks.size());
}

}  // namespace fogsim
