#pragma once

// Online actor-critic allocator. The actor maps the normalized state to two
// categorical heads (blocks 0..M, units 0..N) whose product is the joint
// policy; the critic estimates the state value used as baseline and target.
// Training alternates one exploring episode with one batch update of each
// network drawn from the experience memory.

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fogsim/engine.hpp"
#include "fogsim/neural.hpp"

namespace fogsim {

/// Which heads are learned. The single-resource baselines freeze one head to
/// a fixed per-task share.
enum class HeadMode { joint, blocks_only, units_only };

inline std::string to_string(HeadMode m) {
  switch (m) {
    case HeadMode::joint: return "joint";
    case HeadMode::blocks_only: return "blocks_only";
    case HeadMode::units_only: return "units_only";
  }
  return "joint";
}

inline HeadMode head_mode_from_string(const std::string& s) {
  if (s == "joint") return HeadMode::joint;
  if (s == "blocks_only") return HeadMode::blocks_only;
  if (s == "units_only") return HeadMode::units_only;
  throw InvalidConfig("unknown head mode '" + s + "'");
}

struct AgentConfig {
  double gamma = 0.95;
  int epochs = 3000;
  int batch_size = 256;
  int memory_capacity = 50000;
  double entropy_coef = 0.01;
  bool use_discounted_target = true;
  bool action_masking = true;
  std::uint64_t seed = 1;
  int hidden_width = 64;
  nn::AdamConfig actor_optimizer{.step_size = 1e-3};
  nn::AdamConfig critic_optimizer{.step_size = 1e-3};
  // State scaling: d / (2 * data_scale_bits), l / (2 * cycles_scale).
  double data_scale_bits = 1.0e6;
  double cycles_scale = 1.0e7;
  HeadMode mode = HeadMode::joint;
  int fixed_blocks = 0;  // used when mode == units_only
  int fixed_units = 0;   // used when mode == blocks_only
};

inline void validate(const AgentConfig& c) {
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw InvalidConfig("gamma must lie in [0, 1]");
  if (c.batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (c.memory_capacity < c.batch_size) throw InvalidConfig("batch_size exceeds memory_capacity");
  if (!(c.entropy_coef >= 0.0)) throw InvalidConfig("entropy_coef must be >= 0");
  if (c.hidden_width < 1) throw InvalidConfig("hidden_width must be >= 1");
  if (c.epochs < 0) throw InvalidConfig("epochs must be >= 0");
  if (!(c.data_scale_bits > 0.0) || !(c.cycles_scale > 0.0))
    throw InvalidConfig("state scales must be positive");
  if (c.mode == HeadMode::blocks_only && c.fixed_units < 1)
    throw InvalidConfig("blocks_only agent needs fixed_units >= 1");
  if (c.mode == HeadMode::units_only && c.fixed_blocks < 1)
    throw InvalidConfig("units_only agent needs fixed_blocks >= 1");
}

/// Fixed-capacity FIFO ring of transitions.
class ExperienceMemory {
 public:
  explicit ExperienceMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidConfig("memory capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(const Transition& t) {
    if (items_.size() < capacity_) {
      items_.push_back(t);
    } else {
      items_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  /// Uniform draws with replacement.
  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const {
    if (items_.empty()) throw EmptyInstance("sampling from an empty memory");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(items_[pick(rng)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

struct HeadDistributions {
  std::vector<double> blocks;  // p(x|s), x = 0..M
  std::vector<double> units;   // p(y|s), y = 0..N
  std::vector<bool> blocks_mask;
  std::vector<bool> units_mask;
};

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_delay_s = 0.0;
  int drop_count = 0;
};

using TrainingHistory = std::vector<EpochStats>;
using ScenarioFactory = std::function<Scenario(int epoch)>;

inline constexpr const char* kHistoryCsvHeader = "epoch,mean_reward,mean_delay_s,drop_count";

inline void write_history_csv(std::ostream& os, const TrainingHistory& h) {
  os << kHistoryCsvHeader << '\n';
  for (const auto& e : h)
    os << e.epoch << ',' << format_double(e.mean_reward) << ',' << format_double(e.mean_delay_s)
       << ',' << e.drop_count << '\n';
}

/// Work counters for complexity checks.
struct AgentCounters {
  std::int64_t decisions = 0;
  std::int64_t head_entries = 0;  // probabilities computed while deciding
  std::int64_t update_samples = 0;
};

class OraAgent final : public Allocator {
 public:
  OraAgent(const AgentConfig& config, int total_blocks, int total_units)
      : config_(config), total_blocks_(total_blocks), total_units_(total_units),
        memory_(static_cast<std::size_t>(config.memory_capacity)) {
    validate(config_);
    if (total_blocks < 1 || total_units < 1) throw InvalidCapacity("agent needs M, N >= 1");
    std::mt19937_64 init(config_.seed);
    const int h = config_.hidden_width;
    actor_ = nn::DenseNet({4, h, h, total_blocks + 1 + total_units + 1}, init);
    critic_ = nn::DenseNet({4, h, h, 1}, init);
    actor_opt_ = nn::AdamState::for_net(actor_);
    critic_opt_ = nn::AdamState::for_net(critic_);
    rng_.seed(config_.seed ^ 0x9e3779b97f4a7c15ULL);
  }

  std::string name() const override {
    switch (config_.mode) {
      case HeadMode::joint: return "ora";
      case HeadMode::blocks_only: return "tx-only";
      case HeadMode::units_only: return "comp-only";
    }
    return "ora";
  }

  const AgentConfig& config() const { return config_; }
  int total_blocks() const { return total_blocks_; }
  int total_units() const { return total_units_; }
  const nn::DenseNet& actor() const { return actor_; }
  const nn::DenseNet& critic() const { return critic_; }
  nn::DenseNet& actor() { return actor_; }
  nn::DenseNet& critic() { return critic_; }
  const ExperienceMemory& memory() const { return memory_; }
  const AgentCounters& counters() const { return counters_; }
  void set_explore(bool explore) { explore_ = explore; }
  bool explore() const { return explore_; }

  std::vector<double> features(const ObsState& s) const {
    return {static_cast<double>(s.remaining_blocks) / total_blocks_,
            static_cast<double>(s.remaining_units) / total_units_,
            s.data_size_bits / (2.0 * config_.data_scale_bits),
            s.computation_cycles / (2.0 * config_.cycles_scale)};
  }

  std::vector<bool> blocks_mask(const ObsState& s) const {
    std::vector<bool> m(static_cast<std::size_t>(total_blocks_ + 1), true);
    if (!config_.action_masking) return m;
    for (int x = s.remaining_blocks + 1; x <= total_blocks_; ++x) m[static_cast<std::size_t>(x)] = false;
    if (s.remaining_blocks >= 1 && s.remaining_units >= 1) m[0] = false;
    return m;
  }

  std::vector<bool> units_mask(const ObsState& s) const {
    std::vector<bool> m(static_cast<std::size_t>(total_units_ + 1), true);
    if (!config_.action_masking) return m;
    for (int y = s.remaining_units + 1; y <= total_units_; ++y) m[static_cast<std::size_t>(y)] = false;
    if (s.remaining_blocks >= 1 && s.remaining_units >= 1) m[0] = false;
    return m;
  }

  HeadDistributions distributions(const ObsState& s) const {
    const auto logits = actor_.forward(features(s));
    return distributions_from_logits(s, logits);
  }

  double value(const ObsState& s) const { return critic_.forward(features(s))[0]; }

  JointAction decide(const ObsState& s, std::mt19937_64& rng) override {
    const HeadDistributions d = distributions(s);
    ++counters_.decisions;
    counters_.head_entries += static_cast<std::int64_t>(d.blocks.size() + d.units.size());
    const auto pick = [&](const std::vector<double>& p) {
      if (explore_) {
        std::discrete_distribution<int> dist(p.begin(), p.end());
        return dist(rng);
      }
      return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    };
    JointAction a;
    a.blocks = config_.mode == HeadMode::units_only
                   ? std::min(config_.fixed_blocks, s.remaining_blocks)
                   : pick(d.blocks);
    a.units = config_.mode == HeadMode::blocks_only
                  ? std::min(config_.fixed_units, s.remaining_units)
                  : pick(d.units);
    return a;
  }

  void observe(const Transition& t) override { memory_.push(t); }

  /// r + gamma V(s') - V(s), or r - V(s) with the discounted target disabled.
  double advantage(const Transition& t) const {
    const double bootstrap = config_.use_discounted_target ? config_.gamma * value(t.next_state) : 0.0;
    return t.reward + bootstrap - value(t.state);
  }

  /// Gradient of -(1/B) sum [ln p(x|s) + ln p(y|s)] A + entropy bonus, with
  /// A held constant. Frozen heads contribute nothing.
  nn::GradientTape actor_loss_gradient(std::span<const Transition> batch) const {
    if (batch.empty()) throw EmptyInstance("empty batch");
    nn::GradientTape tape = actor_.make_tape();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    nn::ForwardCache cache;
    std::vector<double> grad(static_cast<std::size_t>(actor_.output_size()));
    for (const Transition& t : batch) {
      const double adv = advantage(t);
      const auto logits = actor_.forward(features(t.state), cache);
      const HeadDistributions d = distributions_from_logits(t.state, logits);
      std::fill(grad.begin(), grad.end(), 0.0);
      if (config_.mode != HeadMode::units_only)
        head_gradient(d.blocks, d.blocks_mask, t.action.blocks, adv, inv_b, grad, 0);
      if (config_.mode != HeadMode::blocks_only)
        head_gradient(d.units, d.units_mask, t.action.units, adv, inv_b, grad,
                      static_cast<std::size_t>(total_blocks_ + 1));
      actor_.backward(cache, grad, tape);
    }
    return tape;
  }

  /// Gradient of (1/B) sum 1/2 (target - V(s))^2, target = r + g V(s') held
  /// constant, g = gamma or 1 when the discounted target is disabled.
  nn::GradientTape critic_loss_gradient(std::span<const Transition> batch) const {
    if (batch.empty()) throw EmptyInstance("empty batch");
    nn::GradientTape tape = critic_.make_tape();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double g = config_.use_discounted_target ? config_.gamma : 1.0;
    nn::ForwardCache cache;
    for (const Transition& t : batch) {
      const double target = t.reward + g * value(t.next_state);
      const double v = critic_.forward(features(t.state), cache)[0];
      const double dv = -(target - v) * inv_b;
      critic_.backward(cache, std::span<const double>(&dv, 1), tape);
    }
    return tape;
  }

  double critic_loss(std::span<const Transition> batch) const {
    const double g = config_.use_discounted_target ? config_.gamma : 1.0;
    double sum = 0.0;
    for (const Transition& t : batch) {
      const double err = t.reward + g * value(t.next_state) - value(t.state);
      sum += 0.5 * err * err;
    }
    return sum / static_cast<double>(batch.size());
  }

  /// One actor step and one critic step, both from the pre-update networks.
  void update(std::span<const Transition> batch) {
    const nn::GradientTape actor_grad = actor_loss_gradient(batch);
    const nn::GradientTape critic_grad = critic_loss_gradient(batch);
    nn::adam_step(actor_, actor_grad, actor_opt_, config_.actor_optimizer);
    nn::adam_step(critic_, critic_grad, critic_opt_, config_.critic_optimizer);
    counters_.update_samples += static_cast<std::int64_t>(batch.size());
  }

  void update_critic_only(std::span<const Transition> batch) {
    nn::adam_step(critic_, critic_loss_gradient(batch), critic_opt_, config_.critic_optimizer);
  }

  /// Per epoch: one exploring episode feeding the memory, then one batch
  /// update sampled uniformly from the memory.
  TrainingHistory train(const ScenarioFactory& make_scenario, int epochs,
                        const EpisodeOptions& options = {}) {
    TrainingHistory history;
    history.reserve(static_cast<std::size_t>(std::max(epochs, 0)));
    const bool was_exploring = explore_;
    explore_ = true;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const Scenario sc = make_scenario(epoch);
      const EpisodeReport rep = run_episode(sc, *this, config_.seed + static_cast<std::uint64_t>(epoch), options);
      double reward_sum = 0.0;
      for (const auto& t : rep.tasks) reward_sum += t.reward;
      history.push_back(EpochStats{epoch, reward_sum / static_cast<double>(rep.tasks.size()),
                                   rep.mean_total_s, rep.drop_count});
      const auto batch = memory_.sample(static_cast<std::size_t>(config_.batch_size), rng_);
      update(batch);
    }
    explore_ = was_exploring;
    return history;
  }

  // -------------------------------------------------------------------------
  // Checkpoint
  // -------------------------------------------------------------------------

  void save(std::ostream& os) const {
    os << kMagic << '\n';
    os << "dims " << total_blocks_ << ' ' << total_units_ << '\n';
    const auto& c = config_;
    os << "config gamma=" << format_double(c.gamma) << " epochs=" << c.epochs
       << " batch_size=" << c.batch_size << " memory_capacity=" << c.memory_capacity
       << " entropy_coef=" << format_double(c.entropy_coef)
       << " use_discounted_target=" << c.use_discounted_target
       << " action_masking=" << c.action_masking << " seed=" << c.seed
       << " hidden_width=" << c.hidden_width
       << " data_scale_bits=" << format_double(c.data_scale_bits)
       << " cycles_scale=" << format_double(c.cycles_scale) << " mode=" << to_string(c.mode)
       << " fixed_blocks=" << c.fixed_blocks << " fixed_units=" << c.fixed_units << '\n';
    write_adam_config(os, "actor_optimizer", c.actor_optimizer);
    write_adam_config(os, "critic_optimizer", c.critic_optimizer);
    os << "actor\n";
    nn::write_net(os, actor_);
    os << "critic\n";
    nn::write_net(os, critic_);
    os << "actor_moments " << actor_opt_.step << '\n';
    nn::write_tape(os, actor_opt_.first_moment);
    nn::write_tape(os, actor_opt_.second_moment);
    os << "critic_moments " << critic_opt_.step << '\n';
    nn::write_tape(os, critic_opt_.first_moment);
    nn::write_tape(os, critic_opt_.second_moment);
    os << "rng " << rng_ << '\n';
    os << "end\n";
  }

  /// Restores an agent; throws DimensionMismatch when the checkpoint was made
  /// for a different (M, N) than expected (pass 0 to accept any).
  static OraAgent load(std::istream& is, int expect_blocks = 0, int expect_units = 0) {
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
      throw FormatError("not a fogsim agent checkpoint or unsupported version");
    std::string tag;
    int m = 0, n = 0;
    if (!(is >> tag >> m >> n) || tag != "dims") throw FormatError("missing dims");
    if ((expect_blocks && m != expect_blocks) || (expect_units && n != expect_units))
      throw DimensionMismatch("checkpoint is for M=" + std::to_string(m) + ", N=" +
                              std::to_string(n));
    std::getline(is, line);
    if (!std::getline(is, line) || line.rfind("config ", 0) != 0) throw FormatError("missing config");
    AgentConfig c;
    const auto get = [&](const std::string& key) { return detail::header_value(line, key); };
    c.gamma = parse_double(get("gamma"));
    c.epochs = std::stoi(get("epochs"));
    c.batch_size = std::stoi(get("batch_size"));
    c.memory_capacity = std::stoi(get("memory_capacity"));
    c.entropy_coef = parse_double(get("entropy_coef"));
    c.use_discounted_target = get("use_discounted_target") == "1";
    c.action_masking = get("action_masking") == "1";
    c.seed = std::stoull(get("seed"));
    c.hidden_width = std::stoi(get("hidden_width"));
    c.data_scale_bits = parse_double(get("data_scale_bits"));
    c.cycles_scale = parse_double(get("cycles_scale"));
    c.mode = head_mode_from_string(get("mode"));
    c.fixed_blocks = std::stoi(get("fixed_blocks"));
    c.fixed_units = std::stoi(get("fixed_units"));
    c.actor_optimizer = read_adam_config(is, "actor_optimizer");
    c.critic_optimizer = read_adam_config(is, "critic_optimizer");

    OraAgent agent(c, m, n);
    expect_tag(is, "actor");
    agent.actor_ = nn::read_net(is);
    expect_tag(is, "critic");
    agent.critic_ = nn::read_net(is);
    if (agent.actor_.sizes() != std::vector<int>{4, c.hidden_width, c.hidden_width, m + n + 2} ||
        agent.critic_.sizes() != std::vector<int>{4, c.hidden_width, c.hidden_width, 1})
      throw DimensionMismatch("network shapes disagree with the checkpoint header");
    expect_tag(is, "actor_moments");
    if (!(is >> agent.actor_opt_.step)) throw FormatError("missing actor step");
    nn::read_tape(is, agent.actor_opt_.first_moment);
    nn::read_tape(is, agent.actor_opt_.second_moment);
    expect_tag(is, "critic_moments");
    if (!(is >> agent.critic_opt_.step)) throw FormatError("missing critic step");
    nn::read_tape(is, agent.critic_opt_.first_moment);
    nn::read_tape(is, agent.critic_opt_.second_moment);
    expect_tag(is, "rng");
    if (!(is >> agent.rng_)) throw FormatError("bad rng state");
    expect_tag(is, "end");
    return agent;
  }

  const nn::AdamState& actor_optimizer_state() const { return actor_opt_; }
  const nn::AdamState& critic_optimizer_state() const { return critic_opt_; }

 private:
  static constexpr const char* kMagic = "fogsim-agent v1";

  HeadDistributions distributions_from_logits(const ObsState& s, std::span<const double> logits) const {
    HeadDistributions d;
    d.blocks_mask = blocks_mask(s);
    d.units_mask = units_mask(s);
    const auto mb = static_cast<std::size_t>(total_blocks_ + 1);
    const auto nu = static_cast<std::size_t>(total_units_ + 1);
    // std::vector<bool> has no contiguous storage; copy into plain arrays.
    const std::unique_ptr<bool[]> bm(new bool[mb]), um(new bool[nu]);
    for (std::size_t k = 0; k < mb; ++k) bm[k] = d.blocks_mask[k];
    for (std::size_t k = 0; k < nu; ++k) um[k] = d.units_mask[k];
    d.blocks = nn::softmax_logits_to_probs(logits.subspan(0, mb), std::span<const bool>(bm.get(), mb));
    d.units = nn::softmax_logits_to_probs(logits.subspan(mb, nu), std::span<const bool>(um.get(), nu));
    return d;
  }

  // d loss / d logits for one head, written into grad[offset ...].
  void head_gradient(const std::vector<double>& p, const std::vector<bool>& mask, int action,
                     double adv, double inv_b, std::vector<double>& grad, std::size_t offset) const {
    double entropy = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
      if (mask[k] && p[k] > 0.0) entropy -= p[k] * std::log(p[k]);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!mask[k]) continue;
      const double indicator = static_cast<int>(k) == action ? 1.0 : 0.0;
      const double d_logp = indicator - p[k];
      const double d_entropy = p[k] > 0.0 ? -p[k] * (std::log(p[k]) + entropy) : 0.0;
      grad[offset + k] = -inv_b * (adv * d_logp + config_.entropy_coef * d_entropy);
    }
  }

  static void write_adam_config(std::ostream& os, const char* tag, const nn::AdamConfig& a) {
    os << tag << ' ' << format_double(a.step_size) << ' ' << format_double(a.beta1) << ' '
       << format_double(a.beta2) << ' ' << format_double(a.epsilon) << '\n';
  }

  static nn::AdamConfig read_adam_config(std::istream& is, const std::string& tag) {
    expect_tag(is, tag);
    std::string a, b, c, d;
    if (!(is >> a >> b >> c >> d)) throw FormatError("truncated optimizer config");
    return nn::AdamConfig{parse_double(a), parse_double(b), parse_double(c), parse_double(d)};
  }

  static void expect_tag(std::istream& is, const std::string& tag) {
    std::string got;
    if (!(is >> got) || got != tag) throw FormatError("expected '" + tag + "', got '" + got + "'");
  }

  AgentConfig config_;
  int total_blocks_;
  int total_units_;
  nn::DenseNet actor_;
  nn::DenseNet critic_;
  nn::AdamState actor_opt_;
  nn::AdamState critic_opt_;
  ExperienceMemory memory_;
  std::mt19937_64 rng_;
  AgentCounters counters_;
  bool explore_ = true;
};

}  // namespace fogsim
