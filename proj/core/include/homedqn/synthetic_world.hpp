#pragma once

// Rule-driven generator of annotated home situations, the retry/advance
// environment dynamics and the reward function.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "homedqn/common.hpp"
#include "homedqn/home_model.hpp"

namespace homedqn {

struct GeneratorConfig {
  bool deterministic = true;
  /// Irrelevant sensors sit at their midpoint (binary: 0) and constrained
  /// ranges collapse to their midpoint instead of being drawn uniformly.
  bool restricted = false;
  double adjacency_presence_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RewardMode : std::uint8_t { plain, windowed };

std::string_view to_string(RewardMode mode);
RewardMode parse_reward_mode(std::string_view text);

struct RewardConfig {
  double correct = 1;
  double wrong = -1;
  double wrong_nothing = -192;
  /// Windowed mode serves every command as three timed states and applies
  /// `wrong_nothing` when do-nothing is chosen although an action was expected.
  RewardMode mode = RewardMode::plain;

  void validate() const;
};

double reward(int expected, int predicted, const RewardConfig& cfg);

inline constexpr int kDefaultTriesThreshold = 3;

struct TryOutcome {
  bool advanced = false;
  int tries = 0;
};

/// Advance when the prediction matches or the retry budget is spent;
/// otherwise count one more failed try.
TryOutcome next_try(bool matched, int tries, int threshold);

struct ActionRule {
  std::optional<Room> location;  // nullopt = any
  std::optional<Activity> activity;
  VoiceCommand command;
  int action = kDoNothing;
  int line = 0;

  bool matches(const AnnotatedTriple& t) const;
};

struct SensorRule {
  std::optional<Room> location;
  std::optional<Activity> activity;
  std::string sensor;
  double lo = 0;
  double hi = 0;
  int line = 0;

  bool matches(Room room, Activity act) const;
};

class RuleTable {
 public:
  /// Line types: `activities <room>: a b ...`, action rules
  /// `loc;act;verb;object -> verb;device;place` and sensor rules
  /// `loc/act -> id;value` or `loc/act -> id;lo..hi`. '*' is a wildcard.
  static RuleTable parse(std::string_view text);
  static RuleTable load(const std::filesystem::path& path);
  static RuleTable reference(const std::filesystem::path& data_dir = default_data_dir());

  const std::vector<Activity>& activities(Room room) const;
  const std::vector<ActionRule>& action_rules() const { return actions_; }
  const std::vector<SensorRule>& sensor_rules() const { return sensors_; }

  /// Actions of every matching rule, in file order (duplicates kept).
  std::vector<int> candidates(const AnnotatedTriple& t) const;
  /// First matching rule's action; do-nothing for an empty command.
  /// Throws when a non-empty command has no rule.
  int first_match(const AnnotatedTriple& t) const;

  /// Every (location, activity, command) the rules can answer, sorted.
  /// With `include_silent`, one command-less triple per (location, activity).
  std::vector<AnnotatedTriple> valid_triples(bool include_silent) const;

  /// Sensor ids named by any sensor rule.
  const std::set<std::string, std::less<>>& relevant_sensors() const { return relevant_; }

  /// Throws when a sensor rule names a sensor absent from `manifest` or
  /// constrains it outside its range.
  void check_against(const SensorManifest& manifest) const;

 private:
  std::vector<std::vector<Activity>> activities_{4};
  std::vector<ActionRule> actions_;
  std::vector<SensorRule> sensors_;
  std::set<std::string, std::less<>> relevant_;
};

class Generator {
 public:
  Generator(RuleTable rules, SensorManifest manifest, GeneratorConfig cfg, bool include_silent);

  AnnotatedState generate_annotated();
  EnvState realize_sensors(const AnnotatedState& a);

  AnnotatedState annotate(const AnnotatedTriple& t);
  const std::vector<AnnotatedTriple>& space() const { return space_; }
  const RuleTable& rules() const { return rules_; }
  const SensorManifest& manifest() const { return manifest_; }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  RuleTable rules_;
  SensorManifest manifest_;
  GeneratorConfig cfg_;
  std::vector<AnnotatedTriple> space_;
  Rng rng_;
};

struct Observation {
  EnvState state;
  int expected_action = kDoNothing;
  std::optional<AnnotatedState> annotation;
  /// Incremented every time the environment advances.
  std::uint64_t serial = 0;
};

/// The states at t-2, t-1 and t: the first two carry no command and expect
/// do-nothing; the last is the sample itself.
std::vector<Observation> window_samples(const AnnotatedState& a, const EnvState& at_t);

struct StepOutcome {
  double reward = 0;
  bool advanced = false;
};

/// Serves samples one at a time; each is repeated until the agent answers it
/// or exceeds the retry threshold.
class Environment {
 public:
  Environment(RewardConfig reward, int tries_threshold);
  virtual ~Environment() = default;

  const Observation& observe() const { return current_; }
  StepOutcome perform_action(int predicted);
  int tries() const { return tries_; }
  int tries_threshold() const { return threshold_; }
  const RewardConfig& reward_config() const { return reward_; }

 protected:
  /// Must be called by the derived constructor to load the first sample.
  void start();
  virtual Observation next_observation() = 0;

 private:
  RewardConfig reward_;
  int threshold_;
  int tries_ = 0;
  std::uint64_t serial_ = 0;
  Observation current_;
};

class SyntheticEnvironment final : public Environment {
 public:
  SyntheticEnvironment(RuleTable rules, SensorManifest manifest, GeneratorConfig gen,
                       RewardConfig reward, int tries_threshold = kDefaultTriesThreshold);

  Generator& generator() { return gen_; }

 private:
  Observation next_observation() override;

  Generator gen_;
  std::deque<Observation> pending_;
  std::int64_t clock_ = 0;
};

/// Cycles through fixed groups of observations (e.g. the windowed states of
/// one recorded command), reshuffling group order on every pass.
class ReplayEnvironment final : public Environment {
 public:
  ReplayEnvironment(std::vector<std::vector<Observation>> groups, std::uint64_t seed,
                    RewardConfig reward, int tries_threshold = kDefaultTriesThreshold);

  std::size_t group_count() const { return groups_.size(); }

 private:
  Observation next_observation() override;

  std::vector<std::vector<Observation>> groups_;
  std::vector<std::size_t> order_;
  std::size_t group_pos_ = 0;
  std::size_t item_pos_ = 0;
  Rng rng_;
};

}  // namespace homedqn
