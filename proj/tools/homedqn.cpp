// homedqn: train, adapt and evaluate the smart-home Q-network agent.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "homedqn/agent.hpp"
#include "homedqn/corpus.hpp"
#include "homedqn/harness.hpp"
#include "homedqn/render.hpp"
#include "homedqn/synthetic_world.hpp"

#ifdef HOMEDQN_WITH_LIVE
#include "homedqn/live_server.hpp"
#endif

namespace fs = std::filesystem;
using namespace homedqn;

namespace {

struct Common {
  std::string config_file;
  std::string out = "out";
  bool quiet = false;
};

PhaseConfig build_config(const Common& common, const std::vector<std::string>& extras) {
  PhaseConfig cfg;
  if (!common.config_file.empty()) apply_config_text(cfg, read_file(common.config_file));
  for (const auto& arg : extras) {
    if (!arg.starts_with("--")) throw Error("unexpected argument '" + arg + "'");
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw Error("expected --key=value, got '" + arg + "'");
    set_config_key(cfg, std::string_view(arg).substr(2, eq - 2), std::string_view(arg).substr(eq + 1));
  }
  return cfg;
}

void write_output(const fs::path& path, std::string_view bytes) {
  write_file(path, bytes);
  spdlog::info("wrote {}", path.string());
}

std::vector<AlignedSample> load_aligned(const PhaseConfig& cfg, const Renderer& renderer) {
  if (cfg.corpus.empty()) throw Error("this command needs corpus=<directory>");
  std::vector<AlignedSample> all;
  for (const auto& p : load_corpus(cfg.corpus, renderer.manifest())) {
    auto s = align(p, renderer.manifest());
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

std::unique_ptr<DqnAgent> require_checkpoint(const PhaseConfig& cfg) {
  if (cfg.checkpoint.empty()) throw Error("this command needs checkpoint=<weights file>");
  return load_agent(cfg, cfg.checkpoint);
}

void save_run(const fs::path& out, const PhaseConfig& cfg, const DqnAgent& agent,
              const std::vector<MetricsRow>& rows) {
  write_output(out / "config.txt", format_config(cfg));
  write_output(out / "metrics.csv", metrics_csv(rows));
  agent.save_checkpoint(out / "weights.aqnw");
  spdlog::info("wrote {}", (out / "weights.aqnw").string());
}

int cmd_train(const Common& c, const std::vector<std::string>& extras, PhaseKind kind) {
  auto cfg = build_config(c, extras);
  cfg.phase = kind;
  const auto world = World::load(cfg.render, cfg.data_dir);
  auto agent = kind == PhaseKind::adapt ? require_checkpoint(cfg) : make_agent(cfg);
  PhaseResult r;
  if (cfg.data == DataSource::corpus) {
    auto groups = as_groups(load_aligned(cfg, world.renderer));
    auto factory = replay_factory(std::move(groups), cfg);
    r = run_phase(cfg, *agent, world.renderer, factory, factory);
  } else {
    const auto factory = world.synthetic(cfg);
    r = run_phase(cfg, *agent, world.renderer, factory, factory);
  }
  save_run(c.out, cfg, *agent, r.rows);
  return 0;
}

int cmd_losocv(const Common& c, const std::vector<std::string>& extras) {
  auto cfg = build_config(c, extras);
  cfg.phase = PhaseKind::adapt;
  const auto world = World::load(cfg.render, cfg.data_dir);
  const auto base = cfg.checkpoint.empty() ? make_agent(cfg) : load_agent(cfg, cfg.checkpoint);
  const auto report = run_losocv(*base, load_aligned(cfg, world.renderer), cfg, world.renderer);
  std::ostringstream summary;
  summary << "held_out;adaptation_samples;test_samples;f1_micro;f1_macro;avg_reward_per_episode\n";
  for (const auto& f : report.folds) {
    const auto& e = f.result.final_eval;
    summary << f.held_out << ';' << f.adaptation_samples << ';' << f.test_samples << ';'
            << format_double(e.scores.micro_f1) << ';' << format_double(e.scores.macro_f1) << ';'
            << format_double(e.avg_reward_per_episode()) << '\n';
    write_output(fs::path(c.out) / ("metrics_" + f.held_out + ".csv"), metrics_csv(f.result.rows));
  }
  summary << "aggregate;;;" << format_double(report.aggregate_f1) << ";;\n";
  write_output(fs::path(c.out) / "losocv.csv", summary.str());
  write_output(fs::path(c.out) / "config.txt", format_config(cfg));
  std::cout << "aggregate f1_micro " << format_double(report.aggregate_f1) << '\n';
  return 0;
}

int cmd_mask(const Common& c, const std::vector<std::string>& extras) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  auto agent = require_checkpoint(cfg);
  const auto report = run_mask_experiment(*agent, cfg, world);
  auto rows = report.adaptation.rows;
  rows.insert(rows.begin(), to_row(report.baseline, "baseline", 0, 0, 0));
  save_run(c.out, cfg, *agent, rows);
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& extras, const std::string& grid) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  const auto rows = run_sweep(parse_sweep_grid(grid), cfg, world);
  write_output(fs::path(c.out) / "sweep.csv", sweep_csv(rows));
  return 0;
}

int cmd_eval(const Common& c, const std::vector<std::string>& extras) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  auto agent = require_checkpoint(cfg);
  std::unique_ptr<Environment> env;
  if (cfg.data == DataSource::corpus) {
    env = replay_factory(as_groups(load_aligned(cfg, world.renderer)), cfg)(cfg.seed);
  } else {
    env = world.synthetic(cfg)(cfg.seed);
  }
  const auto r = evaluate(*agent, *env, cfg.eval_steps, world.renderer, cfg.mask);
  std::cout << metrics_csv({to_row(r, "eval", 0, 0, 0)});
  return 0;
}

int cmd_features(const Common& c, const std::vector<std::string>& extras, const std::string& tap,
                 int samples) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  auto agent = require_checkpoint(cfg);
  const auto which = parse_feature_tap(tap);
  auto gen_cfg = cfg.generator;
  gen_cfg.seed = cfg.seed;
  Generator gen(world.rules, world.renderer.manifest(), gen_cfg, true);
  std::ostringstream csv;
  for (int i = 0; i < samples; ++i) {
    const auto a = gen.generate_annotated();
    const auto state = gen.realize_sensors(a);
    const auto v = agent->extract_features(world.renderer.render(state, cfg.mask), which);
    csv << to_string(which) << ';' << to_string(a.location) << ';' << to_string(a.activity) << ';'
        << to_string(a.command) << ';' << a.expected_action;
    for (float x : v) csv << ';' << format_double(x);
    csv << '\n';
  }
  write_output(fs::path(c.out) / "features.csv", csv.str());
  return 0;
}

int cmd_render(const Common& c, const std::vector<std::string>& extras, const std::string& state_file,
               const std::string& output) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  EnvState state;
  if (!state_file.empty()) {
    state = parse_state(read_file(state_file));
  } else {
    auto gen_cfg = cfg.generator;
    gen_cfg.seed = cfg.seed;
    Generator gen(world.rules, world.renderer.manifest(), gen_cfg, true);
    state = gen.realize_sensors(gen.generate_annotated());
  }
  const auto problems = validate_state(state, world.renderer.manifest());
  for (const auto& v : problems) {
    if (!cfg.mask.hides(v.sensor_id)) throw Error(v.message);
  }
  write_output(output, export_pgm(world.renderer.render(state, cfg.mask)));
  return 0;
}

int cmd_gen_corpus(const Common& c, const std::vector<std::string>& extras, int participants,
                   int samples) {
  auto cfg = build_config(c, extras);
  const auto world = World::load(cfg.render, cfg.data_dir);
  write_synthetic_corpus(c.out, participants, samples, world.rules, world.renderer.manifest(),
                         cfg.seed);
  spdlog::info("wrote {} participants to {}", participants, c.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive smart-home voice-command agent"};
  app.require_subcommand(1);
  Common common;
  std::string grid = "1024/64/3,4096/16/3,4096/32/12";
  std::string tap = "post_conv";
  int feature_samples = 200;
  std::string state_file;
  std::string render_out = "state.pgm";
  int participants = 3;
  int corpus_samples = 120;
  int port = 8765;
  std::string host = "127.0.0.1";

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("-c,--config", common.config_file, "Config file of key = value lines");
    sub->add_option("-o,--out", common.out, "Output directory (or file)");
    sub->add_flag("-q,--quiet", common.quiet, "Only log warnings");
    return sub;
  };
  auto* pretrain = add("pretrain", "Train a fresh agent");
  auto* adapt = add("adapt", "Continue training from checkpoint=<file>");
  auto* losocv = add("losocv", "Leave-one-subject-out adaptation over corpus=<dir>");
  auto* mask = add("mask-exp", "Mask sensors (mask=<ids>) and adapt a checkpoint");
  auto* sweep = add("sweep", "Grid over target_q/minibatch_size/update_freq");
  sweep->add_option("--grid", grid, "Comma list of target_q/minibatch_size/update_freq");
  auto* eval = add("eval", "Greedy evaluation of checkpoint=<file>");
  auto* features = add("export-features", "Write feature vectors of a checkpoint");
  features->add_option("--tap", tap, "post_conv or pre_output");
  features->add_option("--samples", feature_samples, "Number of generated states");
  auto* render = add("render", "Render a state file (or a generated state) to PGM");
  render->add_option("--state", state_file, "State file: timestamp;t, command;verb;object, id;value");
  auto* gen_corpus = add("gen-corpus", "Write a synthetic corpus in recorded-corpus layout");
  gen_corpus->add_option("--participants", participants, "Participant count");
  gen_corpus->add_option("--samples", corpus_samples, "Commands per participant");
  auto* serve = add("serve", "Run the live WebSocket service");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--host", host, "Listen address");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(common.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    auto* sub = app.get_subcommands().front();
    const auto extras = sub->remaining();
    if (sub == pretrain) return cmd_train(common, extras, PhaseKind::pretrain);
    if (sub == adapt) return cmd_train(common, extras, PhaseKind::adapt);
    if (sub == losocv) return cmd_losocv(common, extras);
    if (sub == mask) return cmd_mask(common, extras);
    if (sub == sweep) return cmd_sweep(common, extras, grid);
    if (sub == eval) return cmd_eval(common, extras);
    if (sub == features) return cmd_features(common, extras, tap, feature_samples);
    if (sub == render) {
      return cmd_render(common, extras, state_file, common.out == "out" ? render_out : common.out);
    }
    if (sub == gen_corpus) return cmd_gen_corpus(common, extras, participants, corpus_samples);
    if (sub == serve) {
#ifdef HOMEDQN_WITH_LIVE
      auto cfg = build_config(common, extras);
      return run_live_server(cfg, static_cast<unsigned short>(port), host);
#else
      throw Error("built without the live service");
#endif
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
