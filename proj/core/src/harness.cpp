#include "homedqn/harness.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <map>
#include <set>
#include <sstream>

namespace homedqn {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kFoldStream = 3;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("expected a boolean, got '" + std::string(text) + "'");
}

std::string_view to_string(PhaseKind p) { return p == PhaseKind::pretrain ? "pretrain" : "adapt"; }
std::string_view to_string(DataSource d) { return d == DataSource::synthetic ? "synthetic" : "corpus"; }
std::string bool_text(bool b) { return b ? "true" : "false"; }

struct KeyDef {
  std::string name;
  std::function<void(PhaseConfig&, std::string_view)> set;
  std::function<std::string(const PhaseConfig&)> get;
};

template <class Int>
Int parse_count(std::string_view v, std::string_view key) {
  const auto n = parse_int(v, key);
  if (n < 0) throw Error(std::string(key) + " must not be negative");
  return static_cast<Int>(n);
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    auto add = [&](std::string name, auto set, auto get) {
      t.push_back({std::move(name), set, get});
    };
    add("phase",
        [](PhaseConfig& c, std::string_view v) {
          v = trim(v);
          if (v == "pretrain") c.phase = PhaseKind::pretrain;
          else if (v == "adapt") c.phase = PhaseKind::adapt;
          else throw Error("phase must be pretrain or adapt");
        },
        [](const PhaseConfig& c) { return std::string(to_string(c.phase)); });
    add("data",
        [](PhaseConfig& c, std::string_view v) {
          v = trim(v);
          if (v == "synthetic") c.data = DataSource::synthetic;
          else if (v == "corpus") c.data = DataSource::corpus;
          else throw Error("data must be synthetic or corpus");
        },
        [](const PhaseConfig& c) { return std::string(to_string(c.data)); });
    add("total_steps", [](PhaseConfig& c, std::string_view v) { c.total_steps = parse_count<std::int64_t>(v, "total_steps"); },
        [](const PhaseConfig& c) { return std::to_string(c.total_steps); });
    add("eval_every", [](PhaseConfig& c, std::string_view v) { c.eval_every = parse_count<std::int64_t>(v, "eval_every"); },
        [](const PhaseConfig& c) { return std::to_string(c.eval_every); });
    add("eval_steps", [](PhaseConfig& c, std::string_view v) { c.eval_steps = parse_count<std::int64_t>(v, "eval_steps"); },
        [](const PhaseConfig& c) { return std::to_string(c.eval_steps); });
    add("seed", [](PhaseConfig& c, std::string_view v) { c.seed = parse_count<std::uint64_t>(v, "seed"); },
        [](const PhaseConfig& c) { return std::to_string(c.seed); });
    add("render",
        [](PhaseConfig& c, std::string_view v) { c.render = RenderProfile::by_name(trim(v)).name; },
        [](const PhaseConfig& c) { return c.render; });
    add("mask", [](PhaseConfig& c, std::string_view v) { c.mask = SensorMask::parse(v); },
        [](const PhaseConfig& c) { return c.mask.to_string(); });
    add("agent.gamma", [](PhaseConfig& c, std::string_view v) { c.agent.gamma = parse_double(v, "agent.gamma"); },
        [](const PhaseConfig& c) { return format_double(c.agent.gamma); });
    add("agent.epsilon_start",
        [](PhaseConfig& c, std::string_view v) { c.agent.epsilon.start = parse_double(v, "agent.epsilon_start"); },
        [](const PhaseConfig& c) { return format_double(c.agent.epsilon.start); });
    add("agent.epsilon_end",
        [](PhaseConfig& c, std::string_view v) { c.agent.epsilon.end = parse_double(v, "agent.epsilon_end"); },
        [](const PhaseConfig& c) { return format_double(c.agent.epsilon.end); });
    add("agent.epsilon_anneal_steps",
        [](PhaseConfig& c, std::string_view v) {
          c.agent.epsilon.anneal_steps = parse_count<std::int64_t>(v, "agent.epsilon_anneal_steps");
        },
        [](const PhaseConfig& c) { return std::to_string(c.agent.epsilon.anneal_steps); });
    add("agent.minibatch_size",
        [](PhaseConfig& c, std::string_view v) { c.agent.minibatch_size = parse_count<int>(v, "agent.minibatch_size"); },
        [](const PhaseConfig& c) { return std::to_string(c.agent.minibatch_size); });
    add("agent.update_freq",
        [](PhaseConfig& c, std::string_view v) { c.agent.update_freq = parse_count<int>(v, "agent.update_freq"); },
        [](const PhaseConfig& c) { return std::to_string(c.agent.update_freq); });
    add("agent.target_q",
        [](PhaseConfig& c, std::string_view v) { c.agent.target_q = parse_count<int>(v, "agent.target_q"); },
        [](const PhaseConfig& c) { return std::to_string(c.agent.target_q); });
    add("agent.replay_capacity",
        [](PhaseConfig& c, std::string_view v) {
          c.agent.replay_capacity = parse_count<std::size_t>(v, "agent.replay_capacity");
        },
        [](const PhaseConfig& c) { return std::to_string(c.agent.replay_capacity); });
    add("agent.learning_rate",
        [](PhaseConfig& c, std::string_view v) { c.agent.rms.learning_rate = parse_double(v, "agent.learning_rate"); },
        [](const PhaseConfig& c) { return format_double(c.agent.rms.learning_rate); });
    add("agent.rms_decay",
        [](PhaseConfig& c, std::string_view v) { c.agent.rms.decay = parse_double(v, "agent.rms_decay"); },
        [](const PhaseConfig& c) { return format_double(c.agent.rms.decay); });
    add("agent.rms_epsilon",
        [](PhaseConfig& c, std::string_view v) { c.agent.rms.epsilon = parse_double(v, "agent.rms_epsilon"); },
        [](const PhaseConfig& c) { return format_double(c.agent.rms.epsilon); });
    add("agent.td_clip",
        [](PhaseConfig& c, std::string_view v) { c.agent.td_clip = parse_double(v, "agent.td_clip"); },
        [](const PhaseConfig& c) { return format_double(c.agent.td_clip); });
    add("reward.correct", [](PhaseConfig& c, std::string_view v) { c.reward.correct = parse_double(v, "reward.correct"); },
        [](const PhaseConfig& c) { return format_double(c.reward.correct); });
    add("reward.wrong", [](PhaseConfig& c, std::string_view v) { c.reward.wrong = parse_double(v, "reward.wrong"); },
        [](const PhaseConfig& c) { return format_double(c.reward.wrong); });
    add("reward.wrong_nothing",
        [](PhaseConfig& c, std::string_view v) { c.reward.wrong_nothing = parse_double(v, "reward.wrong_nothing"); },
        [](const PhaseConfig& c) { return format_double(c.reward.wrong_nothing); });
    add("reward.mode", [](PhaseConfig& c, std::string_view v) { c.reward.mode = parse_reward_mode(v); },
        [](const PhaseConfig& c) { return std::string(to_string(c.reward.mode)); });
    add("generator.deterministic",
        [](PhaseConfig& c, std::string_view v) { c.generator.deterministic = parse_bool(v); },
        [](const PhaseConfig& c) { return bool_text(c.generator.deterministic); });
    add("generator.restricted",
        [](PhaseConfig& c, std::string_view v) { c.generator.restricted = parse_bool(v); },
        [](const PhaseConfig& c) { return bool_text(c.generator.restricted); });
    add("generator.adjacency_presence_prob",
        [](PhaseConfig& c, std::string_view v) {
          c.generator.adjacency_presence_prob = parse_double(v, "generator.adjacency_presence_prob");
        },
        [](const PhaseConfig& c) { return format_double(c.generator.adjacency_presence_prob); });
    add("tries_threshold",
        [](PhaseConfig& c, std::string_view v) { c.tries_threshold = parse_count<int>(v, "tries_threshold"); },
        [](const PhaseConfig& c) { return std::to_string(c.tries_threshold); });
    add("deterministic", [](PhaseConfig& c, std::string_view v) { c.deterministic = parse_bool(v); },
        [](const PhaseConfig& c) { return bool_text(c.deterministic); });
    add("eval_at_start", [](PhaseConfig& c, std::string_view v) { c.eval_at_start = parse_bool(v); },
        [](const PhaseConfig& c) { return bool_text(c.eval_at_start); });
    add("corpus", [](PhaseConfig& c, std::string_view v) { c.corpus = std::string(trim(v)); },
        [](const PhaseConfig& c) { return c.corpus.string(); });
    add("checkpoint", [](PhaseConfig& c, std::string_view v) { c.checkpoint = std::string(trim(v)); },
        [](const PhaseConfig& c) { return c.checkpoint.string(); });
    add("data_dir", [](PhaseConfig& c, std::string_view v) { c.data_dir = std::string(trim(v)); },
        [](const PhaseConfig& c) { return c.data_dir.string(); });
    return t;
  }();
  return table;
}

}  // namespace

void Confusion::add(int expected, int predicted) {
  action_by_index(expected);
  action_by_index(predicted);
  ++m_[expected][predicted];
  ++total_;
}

ClassScores score(const Confusion& c, std::optional<int> exclude) {
  ClassScores s;
  std::int64_t tp_all = 0;
  std::int64_t pred_all = 0;
  std::int64_t truth_all = 0;
  double p_sum = 0;
  double r_sum = 0;
  double f_sum = 0;
  int classes = 0;
  for (int k = 0; k < kActionCount; ++k) {
    if (exclude && *exclude == k) continue;
    std::int64_t truth = 0;
    std::int64_t pred = 0;
    for (int j = 0; j < kActionCount; ++j) {
      truth += c.at(k, j);
      pred += c.at(j, k);
    }
    const auto tp = c.at(k, k);
    tp_all += tp;
    pred_all += pred;
    truth_all += truth;
    if (truth == 0 && pred == 0) continue;
    ++classes;
    p_sum += ratio(tp, pred);
    r_sum += ratio(tp, truth);
    f_sum += ratio(2 * tp, truth + pred);
  }
  s.micro_precision = ratio(tp_all, pred_all);
  s.micro_recall = ratio(tp_all, truth_all);
  const double pr = s.micro_precision + s.micro_recall;
  s.micro_f1 = pr == 0 ? 0.0 : 2 * s.micro_precision * s.micro_recall / pr;
  if (classes > 0) {
    s.macro_precision = p_sum / classes;
    s.macro_recall = r_sum / classes;
    s.macro_f1 = f_sum / classes;
  }
  return s;
}

double class_recall(const Confusion& c, int cls) {
  std::int64_t truth = 0;
  for (int j = 0; j < kActionCount; ++j) truth += c.at(cls, j);
  return truth == 0 ? 1.0 : ratio(c.at(cls, cls), truth);
}

EvalResult evaluate(DqnAgent& agent, Environment& env, std::int64_t steps, const Renderer& renderer,
                    const SensorMask& mask) {
  EvalResult r;
  std::optional<std::uint64_t> serial;
  int action = kDoNothing;
  double running = 0;
  for (std::int64_t i = 0; i < steps; ++i) {
    const auto& o = env.observe();
    // Greedy choice is a pure function of the image, which only changes on advance.
    if (serial != o.serial) {
      action = agent.greedy(renderer.render(o.state, mask));
      serial = o.serial;
    }
    const int expected = o.expected_action;
    const auto out = env.perform_action(action);
    r.confusion.add(expected, action);
    ++r.decisions;
    running += out.reward;
    if (out.advanced) {
      ++r.episodes;
      r.episode_reward += running;
      running = 0;
    }
  }
  r.scores = score(r.confusion);
  return r;
}

void PhaseConfig::validate() const {
  agent.validate();
  reward.validate();
  generator.validate();
  if (total_steps < 1 || eval_every < 1 || eval_steps < 1) {
    throw Error("total_steps, eval_every and eval_steps must be >= 1");
  }
  if (eval_every > total_steps) throw Error("eval_every must not exceed total_steps");
  if (tries_threshold < 1) throw Error("tries_threshold must be >= 1");
  RenderProfile::by_name(render);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : key_table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void set_config_key(PhaseConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  for (const auto& k : key_table()) {
    if (k.name == key) {
      try {
        k.set(cfg, value);
      } catch (const Error& e) {
        throw Error("config key " + k.name + ": " + e.what());
      }
      return;
    }
  }
  throw Error("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(PhaseConfig& cfg, std::string_view text) {
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_key(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string format_config(const PhaseConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : key_table()) out << k.name << " = " << k.get(cfg) << '\n';
  return out.str();
}

MetricsRow to_row(const EvalResult& r, std::string_view phase, std::int64_t step, double epsilon,
                  double wall_ms) {
  MetricsRow row;
  row.phase = std::string(phase);
  row.step = step;
  row.episodes = r.episodes;
  row.avg_reward_per_episode = r.avg_reward_per_episode();
  row.precision = r.scores.macro_precision;
  row.recall = r.scores.macro_recall;
  row.f1_micro = r.scores.micro_f1;
  row.f1_macro = r.scores.macro_f1;
  row.epsilon = epsilon;
  row.wall_ms = wall_ms;
  return row;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "phase;step;episodes;avg_reward_per_episode;precision;recall;f1_micro;f1_macro;epsilon;"
         "wall_ms\n";
  for (const auto& r : rows) {
    out << r.phase << ';' << r.step << ';' << r.episodes << ';'
        << format_double(r.avg_reward_per_episode) << ';' << format_double(r.precision) << ';'
        << format_double(r.recall) << ';' << format_double(r.f1_micro) << ';'
        << format_double(r.f1_macro) << ';' << format_double(r.epsilon) << ';'
        << format_double(r.wall_ms) << '\n';
  }
  return out.str();
}

World World::load(std::string_view profile, const std::filesystem::path& data_dir) {
  return World{Renderer::reference(profile, data_dir), RuleTable::reference(data_dir)};
}

EnvFactory World::synthetic(const PhaseConfig& cfg) const {
  return [rules = rules, manifest = renderer.manifest(), gen = cfg.generator, reward = cfg.reward,
          threshold = cfg.tries_threshold](std::uint64_t seed) -> std::unique_ptr<Environment> {
    auto g = gen;
    g.seed = seed;
    return std::make_unique<SyntheticEnvironment>(rules, manifest, g, reward, threshold);
  };
}

EnvFactory replay_factory(std::vector<std::vector<Observation>> groups, const PhaseConfig& cfg) {
  auto shared = std::make_shared<const std::vector<std::vector<Observation>>>(std::move(groups));
  return [shared, reward = cfg.reward,
          threshold = cfg.tries_threshold](std::uint64_t seed) -> std::unique_ptr<Environment> {
    return std::make_unique<ReplayEnvironment>(*shared, seed, reward, threshold);
  };
}

PhaseResult run_phase(const PhaseConfig& cfg, DqnAgent& agent, const Renderer& renderer,
                      const EnvFactory& train_env, const EnvFactory& eval_env,
                      const StepHook& hook) {
  cfg.validate();
  if (agent.online().input_side() != renderer.profile().image_side) {
    throw Error("agent network takes " + std::to_string(agent.online().input_side()) +
                " px images but the render profile is " + renderer.profile().name);
  }
  const auto phase_name = std::string(to_string(cfg.phase));
  const auto start = Clock::now();
  const auto learn_before = agent.learn_stats();
  PhaseResult result;
  auto wall = [&] { return cfg.deterministic ? 0.0 : elapsed_ms(start); };
  auto run_eval = [&](std::int64_t step) {
    auto env = eval_env(mix_seed(cfg.seed, kEvalStream));
    result.final_eval = evaluate(agent, *env, cfg.eval_steps, renderer, cfg.mask);
    const double eps = agent.config().epsilon.at(static_cast<std::int64_t>(agent.interactions()));
    result.rows.push_back(to_row(result.final_eval, phase_name, step, eps, wall()));
    spdlog::info("{} step {}: f1_micro={:.4f} f1_macro={:.4f} reward/episode={:.3f}", phase_name,
                 step, result.final_eval.scores.micro_f1, result.final_eval.scores.macro_f1,
                 result.final_eval.avg_reward_per_episode());
  };

  if (cfg.eval_at_start) run_eval(0);
  auto env = train_env(mix_seed(cfg.seed, kTrainStream));
  auto image = std::make_shared<const StateImage>(renderer.render(env->observe().state, cfg.mask));
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const double eps = agent.config().epsilon.at(static_cast<std::int64_t>(agent.interactions()));
    const int action = agent.get_action(*image, eps);
    const auto out = env->perform_action(action);
    ImagePtr next = image;
    if (out.advanced) {
      next = std::make_shared<const StateImage>(renderer.render(env->observe().state, cfg.mask));
    }
    agent.integrate({image, action, out.reward, next});
    image = std::move(next);
    if (hook) hook(step);
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) run_eval(step);
  }
  result.wall_ms = wall();
  const auto& stats = agent.learn_stats();
  result.learn_calls = stats.calls - learn_before.calls;
  if (result.learn_calls > 0) {
    result.mean_learn_ms = (stats.total_ms - learn_before.total_ms) / result.learn_calls;
  }
  if (cfg.deterministic) result.mean_learn_ms = 0;
  return result;
}

std::unique_ptr<DqnAgent> make_agent(const PhaseConfig& cfg) {
  return std::make_unique<DqnAgent>(NetworkSpec::by_name(cfg.render), cfg.agent, cfg.seed);
}

std::unique_ptr<DqnAgent> load_agent(const PhaseConfig& cfg, const std::filesystem::path& path) {
  return std::make_unique<DqnAgent>(DqnAgent::load_checkpoint(
      path, cfg.agent, cfg.seed, RenderProfile::by_name(cfg.render).image_side));
}

LosocvReport run_losocv(const DqnAgent& base, const std::vector<AlignedSample>& samples,
                        const PhaseConfig& cfg, const Renderer& renderer) {
  const auto start = Clock::now();
  LosocvReport report;
  const auto folds = losocv_folds(samples);
  double f1_sum = 0;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& fold = folds[i];
    auto fold_cfg = cfg;
    fold_cfg.phase = PhaseKind::adapt;
    fold_cfg.seed = mix_seed(cfg.seed, kFoldStream + i);
    DqnAgent agent(base.online(), cfg.agent, fold_cfg.seed);
    agent.set_interactions(base.interactions());
    FoldReport fr;
    fr.held_out = fold.held_out;
    fr.adaptation_samples = fold.adaptation.size();
    fr.test_samples = fold.test.size();
    spdlog::info("fold {}/{}: held out {} ({} adaptation, {} test samples)", i + 1, folds.size(),
                 fold.held_out, fr.adaptation_samples, fr.test_samples);
    fr.result = run_phase(fold_cfg, agent, renderer, replay_factory(as_groups(fold.adaptation), fold_cfg),
                          replay_factory(as_groups(fold.test), fold_cfg));
    f1_sum += fr.result.final_eval.scores.micro_f1;
    report.folds.push_back(std::move(fr));
  }
  report.aggregate_f1 = f1_sum / static_cast<double>(folds.size());
  report.wall_ms = cfg.deterministic ? 0.0 : elapsed_ms(start);
  return report;
}

MaskReport run_mask_experiment(DqnAgent& agent, const PhaseConfig& cfg, const World& world) {
  MaskReport report;
  const auto factory = world.synthetic(cfg);
  {
    auto env = factory(mix_seed(cfg.seed, kEvalStream));
    report.baseline = evaluate(agent, *env, cfg.eval_steps, world.renderer);
  }
  auto masked = cfg;
  masked.phase = PhaseKind::adapt;
  masked.eval_at_start = true;
  report.adaptation = run_phase(masked, agent, world.renderer, factory, factory);
  return report;
}

std::vector<SweepPoint> parse_sweep_grid(std::string_view text) {
  std::vector<SweepPoint> out;
  for (auto item : split(text, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto f = split(item, '/');
    if (f.size() != 3) throw Error("sweep point '" + std::string(item) + "': expected target_q/minibatch_size/update_freq");
    out.push_back({static_cast<int>(parse_int(f[0], "target_q")),
                   static_cast<int>(parse_int(f[1], "minibatch_size")),
                   static_cast<int>(parse_int(f[2], "update_freq"))});
  }
  if (out.empty()) throw Error("empty sweep grid");
  return out;
}

std::vector<SweepRow> run_sweep(const std::vector<SweepPoint>& grid, const PhaseConfig& cfg,
                                const World& world) {
  std::vector<SweepRow> rows;
  const auto factory = world.synthetic(cfg);
  for (const auto& p : grid) {
    auto c = cfg;
    c.agent.target_q = p.target_q;
    c.agent.minibatch_size = p.minibatch_size;
    c.agent.update_freq = p.update_freq;
    auto agent = make_agent(c);
    spdlog::info("sweep point target_q={} minibatch_size={} update_freq={}", p.target_q,
                 p.minibatch_size, p.update_freq);
    const auto r = run_phase(c, *agent, world.renderer, factory, factory);
    SweepRow row;
    row.point = p;
    row.f1_micro = r.final_eval.scores.micro_f1;
    row.avg_reward = r.final_eval.avg_reward_per_episode();
    row.wall_ms = r.wall_ms;
    row.learn_calls = r.learn_calls;
    row.mean_learn_ms = r.mean_learn_ms;
    row.score_time_ratio = r.wall_ms > 0 ? row.f1_micro / r.wall_ms : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "target_q;minibatch_size;update_freq;f1_micro;avg_reward;wall_ms;learn_calls;mean_learn_ms;"
         "score_time_ratio\n";
  for (const auto& r : rows) {
    out << r.point.target_q << ';' << r.point.minibatch_size << ';' << r.point.update_freq << ';'
        << format_double(r.f1_micro) << ';' << format_double(r.avg_reward) << ';'
        << format_double(r.wall_ms) << ';' << r.learn_calls << ';' << format_double(r.mean_learn_ms)
        << ';' << format_double(r.score_time_ratio) << '\n';
  }
  return out.str();
}

}  // namespace homedqn
