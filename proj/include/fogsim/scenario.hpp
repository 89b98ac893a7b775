#pragma once

// Reproducible workload generation for one gateway cell and the line-oriented
// scenario text format used for replay and cross-implementation diffing.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fogsim/fog_model.hpp"

namespace fogsim {

/// Radio and compute budget of the fog node, in the units of the parameter table.
struct CapacityInputs {
  double bandwidth_hz = 5.0e6;
  double block_hz = 1.8e5;
  double fog_cycles_per_s = 3.0e8;
  double unit_cycles_per_s = 1.0e7;
  double qos_s = 1.0;
  double drop_penalty_s = 10.0;
  bool shannon_plus_one = true;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double area_km = 1.0;
  int num_locations = 50;
  int num_tasks = 500;
  double horizon_s = 50.0;
  double data_size_mean_bits = 1.0e6;
  double data_size_std_bits = 3.0e5;
  double intensity_mean = 10.0;
  double intensity_std = 3.0;
  double tx_power_w = 0.2;
  double noise_dbm = -104.0;
  double pathloss_a = 128.1;
  double pathloss_b = 37.6;
  CapacityInputs capacity;
};

inline constexpr double kMinDistanceKm = 0.01;
inline constexpr double kMinDataSizeBits = 1.0e4;
inline constexpr double kMinIntensity = 1.0;

struct Scenario {
  std::vector<TaskSpec> tasks;
  SystemCapacity capacity;
  double tx_power_w = 0.2;
  double noise_dbm = -104.0;
};

inline double path_loss_db(double distance_km, double a = 128.1, double b = 37.6) {
  if (!(distance_km > 0.0)) throw InvalidDistance("distance must be positive");
  return a + b * std::log10(distance_km);
}

inline SystemCapacity capacity_from_table(double bandwidth_hz, double block_hz,
                                          double fog_cycles_per_s, double unit_cycles_per_s,
                                          double qos_s, double drop_penalty_s = 10.0) {
  if (!(bandwidth_hz > 0.0) || !(block_hz > 0.0) || !(fog_cycles_per_s > 0.0) ||
      !(unit_cycles_per_s > 0.0) || !(qos_s > 0.0))
    throw InvalidCapacity("capacity inputs must be positive");
  // Tolerate ratios like 0.3/0.1 landing a hair below an integer.
  const auto whole = [](double num, double den) {
    return static_cast<int>(std::floor(num / den * (1.0 + 1e-12)));
  };
  SystemCapacity cap;
  cap.block_width_hz = block_hz;
  cap.unit_cycles_per_s = unit_cycles_per_s;
  cap.total_blocks = whole(bandwidth_hz, block_hz);
  cap.total_units = whole(fog_cycles_per_s, unit_cycles_per_s);
  cap.qos_deadline_s = qos_s;
  cap.drop_penalty_s = drop_penalty_s;
  if (cap.total_blocks < 1) throw InvalidCapacity("bandwidth holds no resource block");
  if (cap.total_units < 1) throw InvalidCapacity("fog capacity holds no computation unit");
  validate(cap);
  return cap;
}

inline SystemCapacity capacity_from_table(const CapacityInputs& in) {
  auto cap = capacity_from_table(in.bandwidth_hz, in.block_hz, in.fog_cycles_per_s,
                                 in.unit_cycles_per_s, in.qos_s, in.drop_penalty_s);
  cap.shannon_plus_one = in.shannon_plus_one;
  return cap;
}

inline void validate(const ScenarioConfig& c) {
  if (c.num_tasks < 1) throw InvalidConfig("num_tasks must be >= 1");
  if (c.num_locations < 1) throw InvalidConfig("num_locations must be >= 1");
  if (!(c.horizon_s > 0.0)) throw InvalidConfig("horizon_s must be positive");
  if (!(c.area_km > 0.0)) throw InvalidConfig("area_km must be positive");
  if (!(c.data_size_std_bits >= 0.0) || !(c.intensity_std >= 0.0))
    throw InvalidConfig("standard deviations must be non-negative");
  if (!(c.data_size_mean_bits > 0.0) || !(c.intensity_mean > 0.0))
    throw InvalidConfig("means must be positive");
  if (!(c.tx_power_w > 0.0)) throw InvalidConfig("tx_power_w must be positive");
}

namespace detail {

// Normal draw resampled until it clears the floor.
template <class Rng>
double truncated_normal(Rng& rng, double mean, double sd, double floor) {
  if (sd == 0.0) return std::max(mean, floor);
  std::normal_distribution<double> dist(mean, sd);
  for (;;) {
    const double v = dist(rng);
    if (v >= floor) return v;
  }
}

}  // namespace detail

/// Draws a scenario; equal configs give bit-identical results.
inline Scenario generate(const ScenarioConfig& config) {
  validate(config);
  Scenario sc;
  sc.capacity = capacity_from_table(config.capacity);
  sc.tx_power_w = config.tx_power_w;
  sc.noise_dbm = config.noise_dbm;

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coord(0.0, config.area_km);
  const double center = config.area_km / 2.0;

  std::vector<double> location_gain_db(static_cast<std::size_t>(config.num_locations));
  for (auto& g : location_gain_db) {
    const double px = coord(rng);
    const double py = coord(rng);
    const double d = std::max(std::hypot(px - center, py - center), kMinDistanceKm);
    g = -path_loss_db(d, config.pathloss_a, config.pathloss_b);
  }

  std::uniform_int_distribution<int> pick_location(0, config.num_locations - 1);
  std::uniform_real_distribution<double> arrival(0.0, config.horizon_s);
  const double noise_w = dbm_to_watts(config.noise_dbm);

  sc.tasks.reserve(static_cast<std::size_t>(config.num_tasks));
  for (int i = 0; i < config.num_tasks; ++i) {
    const double gain_db = location_gain_db[static_cast<std::size_t>(pick_location(rng))];
    const double t = arrival(rng);
    const double bits = detail::truncated_normal(rng, config.data_size_mean_bits,
                                                 config.data_size_std_bits, kMinDataSizeBits);
    const double mu = detail::truncated_normal(rng, config.intensity_mean, config.intensity_std,
                                               kMinIntensity);
    sc.tasks.push_back(make_task(i, t, bits, mu, LinkBudget{config.tx_power_w, db_to_linear(gain_db), noise_w}));
  }
  std::sort(sc.tasks.begin(), sc.tasks.end(), [](const TaskSpec& a, const TaskSpec& b) {
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.id < b.id;
  });
  return sc;
}

// ---------------------------------------------------------------------------
// Text format
//
//   # fogsim-scenario v1
//   # capacity block_hz=.. unit_cycles=.. blocks=.. units=.. qos_s=.. drop_s=.. shannon_plus_one=0|1
//   # link tx_power_w=.. noise_dbm=..
//   id,arrival_s,l_bits,mu,gain_db
//   <one row per task>
//
// Numbers use the shortest decimal form that round-trips the double exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("bad number '" + std::string(s) + "'");
  return v;
}

inline constexpr const char* kScenarioMagic = "# fogsim-scenario v1";
inline constexpr const char* kScenarioColumns = "id,arrival_s,l_bits,mu,gain_db";

inline void write_scenario(std::ostream& os, const Scenario& sc) {
  const auto& c = sc.capacity;
  os << kScenarioMagic << '\n';
  os << "# capacity block_hz=" << format_double(c.block_width_hz)
     << " unit_cycles=" << format_double(c.unit_cycles_per_s) << " blocks=" << c.total_blocks
     << " units=" << c.total_units << " qos_s=" << format_double(c.qos_deadline_s)
     << " drop_s=" << format_double(c.drop_penalty_s)
     << " shannon_plus_one=" << (c.shannon_plus_one ? 1 : 0) << '\n';
  os << "# link tx_power_w=" << format_double(sc.tx_power_w)
     << " noise_dbm=" << format_double(sc.noise_dbm) << '\n';
  os << kScenarioColumns << '\n';
  for (const auto& t : sc.tasks) {
    os << t.id << ',' << format_double(t.arrival_time) << ',' << format_double(t.data_size_bits)
       << ',' << format_double(t.intensity) << ','
       << format_double(linear_to_db(t.link.channel_gain)) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep))
    if (!cur.empty() || sep == ',') out.push_back(cur);
  return out;
}

// Parses "key=value" tokens after the given header prefix.
inline std::string header_value(const std::string& line, const std::string& key) {
  for (const auto& tok : split(line, ' ')) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos && tok.substr(0, eq) == key) return tok.substr(eq + 1);
  }
  throw FormatError("missing header key '" + key + "'");
}

}  // namespace detail

inline Scenario read_scenario(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kScenarioMagic)
    throw FormatError("not a fogsim scenario file (bad magic line)");
  Scenario sc;
  std::string cap_line, link_line, columns;
  if (!std::getline(is, cap_line) || cap_line.rfind("# capacity ", 0) != 0)
    throw FormatError("missing capacity header");
  if (!std::getline(is, link_line) || link_line.rfind("# link ", 0) != 0)
    throw FormatError("missing link header");
  if (!std::getline(is, columns) || columns != kScenarioColumns)
    throw FormatError("unexpected column header");

  using detail::header_value;
  auto& c = sc.capacity;
  c.block_width_hz = parse_double(header_value(cap_line, "block_hz"));
  c.unit_cycles_per_s = parse_double(header_value(cap_line, "unit_cycles"));
  c.total_blocks = std::stoi(header_value(cap_line, "blocks"));
  c.total_units = std::stoi(header_value(cap_line, "units"));
  c.qos_deadline_s = parse_double(header_value(cap_line, "qos_s"));
  c.drop_penalty_s = parse_double(header_value(cap_line, "drop_s"));
  c.shannon_plus_one = header_value(cap_line, "shannon_plus_one") != "0";
  validate(c);
  sc.tx_power_w = parse_double(header_value(link_line, "tx_power_w"));
  sc.noise_dbm = parse_double(header_value(link_line, "noise_dbm"));
  const double noise_w = dbm_to_watts(sc.noise_dbm);

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 5) throw FormatError("task row needs 5 fields: " + line);
    auto t = make_task(std::stoll(f[0]), parse_double(f[1]), parse_double(f[2]),
                       parse_double(f[3]),
                       LinkBudget{sc.tx_power_w, db_to_linear(parse_double(f[4])), noise_w});
    validate(t);
    sc.tasks.push_back(t);
  }
  std::stable_sort(sc.tasks.begin(), sc.tasks.end(), [](const TaskSpec& a, const TaskSpec& b) {
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.id < b.id;
  });
  return sc;
}

}  // namespace fogsim
