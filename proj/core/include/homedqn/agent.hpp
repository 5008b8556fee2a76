#pragma once

// Deep Q-learning agent: epsilon-greedy choice, replay pool, target network
// and the minibatch learning step.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "homedqn/common.hpp"
#include "homedqn/home_model.hpp"
#include "homedqn/nn.hpp"
#include "homedqn/render.hpp"

namespace homedqn {

enum class Phase : std::uint8_t { train, eval };

struct EpsilonSchedule {
  double start = 0.99;
  double end = 0.5;
  std::int64_t anneal_steps = 200000;

  /// Linear from `start` at step 0 to `end` at `anneal_steps`, then flat; 0 in eval.
  double at(std::int64_t step, Phase phase = Phase::train) const;
};

struct AgentConfig {
  double gamma = 0.9;
  EpsilonSchedule epsilon;
  int minibatch_size = 32;
  int update_freq = 12;
  int target_q = 4096;
  std::size_t replay_capacity = 100000;
  RmsPropConfig rms;
  /// Clamps each temporal-difference error to +-td_clip before backprop; 0 disables.
  double td_clip = 0;

  void validate() const;
};

using ImagePtr = std::shared_ptr<const StateImage>;

struct Transition {
  ImagePtr state;
  int action = kDoNothing;
  double reward = 0;
  ImagePtr next_state;
};

class ReplayPool {
 public:
  explicit ReplayPool(std::size_t capacity);

  /// Evicts the oldest transition once full.
  void push(Transition t);
  /// Uniform draw with replacement. Throws on an empty pool.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return total_pushed_; }
  /// i-th oldest transition still held.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;
  std::uint64_t total_pushed_ = 0;
};

using QValues = std::array<float, kActionCount>;

/// Lowest index among maxima.
int argmax(const QValues& q);

struct LearnStats {
  std::uint64_t calls = 0;
  double total_ms = 0;
  double last_ms = 0;
};

enum class FeatureTap : std::uint8_t { post_conv, pre_output };

std::string_view to_string(FeatureTap tap);
FeatureTap parse_feature_tap(std::string_view text);

class DqnAgent {
 public:
  DqnAgent(const NetworkSpec& spec, AgentConfig cfg, std::uint64_t seed);
  DqnAgent(Network<float> online, AgentConfig cfg, std::uint64_t seed);

  QValues q_values(const StateImage& s);
  QValues target_q_values(const StateImage& s);
  int greedy(const StateImage& s) { return argmax(q_values(s)); }
  /// Uniform over the 33 actions with probability epsilon, else greedy.
  int get_action(const StateImage& s, double epsilon);

  /// Records one interaction: pushes the transition, learns every
  /// update_freq interactions and syncs the target every target_q. Returns
  /// true when a learning step ran.
  bool integrate(Transition t);

  /// One minibatch update; requires a non-empty pool.
  void learn();
  void sync_target();

  std::vector<float> extract_features(const StateImage& s, FeatureTap tap);

  const Network<float>& online() const { return online_; }
  Network<float>& online() { return online_; }
  const Network<float>& target() const { return target_; }
  const ReplayPool& pool() const { return pool_; }
  const AgentConfig& config() const { return cfg_; }
  std::uint64_t interactions() const { return interactions_; }
  /// Continues the epsilon schedule and learning cadence from `n`.
  void set_interactions(std::uint64_t n) { interactions_ = n; }
  const LearnStats& learn_stats() const { return stats_; }
  Rng& rng() { return rng_; }

  /// Weights file plus `<path>.meta` holding interaction and pool counters.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Throws if the stored network does not take `input_side` images.
  static DqnAgent load_checkpoint(const std::filesystem::path& path, AgentConfig cfg,
                                  std::uint64_t seed, std::optional<int> input_side = {});

 private:
  void to_input(const StateImage& s, float* dst) const;

  AgentConfig cfg_;
  Network<float> online_;
  Network<float> target_;
  RmsProp<float> rms_;
  Gradients<float> grads_;
  ReplayPool pool_;
  Rng rng_;
  std::uint64_t interactions_ = 0;
  LearnStats stats_;
  std::vector<float> batch_in_;
  std::vector<float> d_out_;
};

}  // namespace homedqn
