#pragma once

// Training/evaluation protocol: the interaction loop, classification metrics,
// leave-one-subject-out adaptation, sensor-mask and hyper-parameter sweeps.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "homedqn/agent.hpp"
#include "homedqn/corpus.hpp"
#include "homedqn/render.hpp"
#include "homedqn/synthetic_world.hpp"

namespace homedqn {

class Confusion {
 public:
  void add(int expected, int predicted);
  std::int64_t at(int expected, int predicted) const { return m_[expected][predicted]; }
  std::int64_t total() const { return total_; }

 private:
  std::array<std::array<std::int64_t, kActionCount>, kActionCount> m_{};
  std::int64_t total_ = 0;
};

struct ClassScores {
  double micro_precision = 0;
  double micro_recall = 0;
  double micro_f1 = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
};

/// Macro averages run over the classes occurring in truth or prediction,
/// optionally excluding one class.
ClassScores score(const Confusion& c, std::optional<int> exclude = std::nullopt);
/// Recall of a single class; 1 when the class never occurs in truth.
double class_recall(const Confusion& c, int cls);

struct EvalResult {
  Confusion confusion;
  ClassScores scores;
  std::int64_t decisions = 0;
  std::int64_t episodes = 0;
  double episode_reward = 0;  // summed over completed episodes

  double avg_reward_per_episode() const {
    return episodes == 0 ? 0.0 : episode_reward / static_cast<double>(episodes);
  }
};

/// Runs `steps` greedy interactions; every decision is scored.
EvalResult evaluate(DqnAgent& agent, Environment& env, std::int64_t steps, const Renderer& renderer,
                    const SensorMask& mask = {});

enum class PhaseKind : std::uint8_t { pretrain, adapt };
enum class DataSource : std::uint8_t { synthetic, corpus };

struct PhaseConfig {
  PhaseKind phase = PhaseKind::pretrain;
  DataSource data = DataSource::synthetic;
  std::int64_t total_steps = 200000;
  std::int64_t eval_every = 20000;
  std::int64_t eval_steps = 5000;
  AgentConfig agent;
  RewardConfig reward;
  GeneratorConfig generator;
  int tries_threshold = kDefaultTriesThreshold;
  std::string render = "desk";
  SensorMask mask;
  std::uint64_t seed = 0;
  /// Zeroes wall-clock columns so that equal runs write equal files.
  bool deterministic = false;
  bool eval_at_start = false;
  std::filesystem::path corpus;
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir = default_data_dir();

  void validate() const;
};

/// Key names accepted by set_config_key, in documentation order.
const std::vector<std::string>& config_keys();
void set_config_key(PhaseConfig& cfg, std::string_view key, std::string_view value);
/// `key = value` lines; '#' starts a comment.
void apply_config_text(PhaseConfig& cfg, std::string_view text);
std::string format_config(const PhaseConfig& cfg);

struct MetricsRow {
  std::string phase;
  std::int64_t step = 0;
  std::int64_t episodes = 0;
  double avg_reward_per_episode = 0;
  double precision = 0;
  double recall = 0;
  double f1_micro = 0;
  double f1_macro = 0;
  double epsilon = 0;
  double wall_ms = 0;
};

MetricsRow to_row(const EvalResult& r, std::string_view phase, std::int64_t step, double epsilon,
                  double wall_ms);
std::string metrics_csv(const std::vector<MetricsRow>& rows);

using EnvFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;

/// Reference home (manifest, walls, glyphs, rules) for a render profile.
struct World {
  Renderer renderer;
  RuleTable rules;

  static World load(std::string_view profile, const std::filesystem::path& data_dir);
  EnvFactory synthetic(const PhaseConfig& cfg) const;
};

EnvFactory replay_factory(std::vector<std::vector<Observation>> groups, const PhaseConfig& cfg);

struct PhaseResult {
  std::vector<MetricsRow> rows;
  EvalResult final_eval;
  double wall_ms = 0;
  std::uint64_t learn_calls = 0;
  double mean_learn_ms = 0;
};

using StepHook = std::function<void(std::int64_t step)>;

/// Interaction loop: observe, act epsilon-greedily, perform, reward and
/// integrate; every eval_every steps an independent greedy evaluation of
/// eval_steps interactions appends a row (the last one always runs at the end).
PhaseResult run_phase(const PhaseConfig& cfg, DqnAgent& agent, const Renderer& renderer,
                      const EnvFactory& train_env, const EnvFactory& eval_env,
                      const StepHook& hook = {});

std::unique_ptr<DqnAgent> make_agent(const PhaseConfig& cfg);
std::unique_ptr<DqnAgent> load_agent(const PhaseConfig& cfg, const std::filesystem::path& path);

struct FoldReport {
  std::string held_out;
  std::size_t adaptation_samples = 0;
  std::size_t test_samples = 0;
  PhaseResult result;
};

struct LosocvReport {
  std::vector<FoldReport> folds;
  double aggregate_f1 = 0;  // mean of per-fold final micro F1
  double wall_ms = 0;
};

/// Each fold adapts a copy of `base` on the other participants and is scored
/// on the held-out one.
LosocvReport run_losocv(const DqnAgent& base, const std::vector<AlignedSample>& samples,
                        const PhaseConfig& cfg, const Renderer& renderer);

struct MaskReport {
  EvalResult baseline;  // unmasked, before adaptation
  PhaseResult adaptation;
};

MaskReport run_mask_experiment(DqnAgent& agent, const PhaseConfig& cfg, const World& world);

struct SweepPoint {
  int target_q = 0;
  int minibatch_size = 0;
  int update_freq = 0;
};

struct SweepRow {
  SweepPoint point;
  double f1_micro = 0;
  double avg_reward = 0;
  double wall_ms = 0;
  std::uint64_t learn_calls = 0;
  double mean_learn_ms = 0;
  double score_time_ratio = 0;  // f1_micro / wall_ms
};

std::vector<SweepPoint> parse_sweep_grid(std::string_view text);
std::vector<SweepRow> run_sweep(const std::vector<SweepPoint>& grid, const PhaseConfig& cfg,
                                const World& world);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace homedqn
