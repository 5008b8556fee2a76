// Acceptance run: one PASS/FAIL line per headline property of the system.
// Usage: homedqn_acceptance <work dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "chain.hpp"
#include "golden.hpp"
#include "homedqn/corpus.hpp"
#include "homedqn/harness.hpp"
#include "homedqn/tabular.hpp"

using namespace homedqn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double minutes_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count() / 60.0;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

double accuracy(const EvalResult& r) {
  std::int64_t hit = 0;
  for (int a = 0; a < kActionCount; ++a) hit += r.confusion.at(a, a);
  return static_cast<double>(hit) / static_cast<double>(r.confusion.total());
}

class Acceptance {
 public:
  explicit Acceptance(fs::path work) : work_(std::move(work)), desk_(World::load("desk", HOMEDQN_SOURCE_DATA_DIR)) {
    fs::create_directories(work_);
  }

  int run() {
    check("desk_convergence", [&] { return desk_convergence(); });
    check("windowed_sanity", [&] { return windowed_sanity(); });
    check("tabular_oracle", [&] { return tabular_oracle(); });
    check("deep_vs_tabular", [&] { return deep_vs_tabular(); });
    check("gradient_check", [&] { return gradient_check(); });
    check("shape_conformance", [&] { return shape_conformance(); });
    check("sensor_mask_recovery", [&] { return sensor_mask_recovery(); });
    check("sweep_harness", [&] { return sweep_harness(); });
    check("determinism", [&] { return determinism(); });
    check("losocv_fixture", [&] { return losocv_fixture(); });
    check("epsilon_endpoints", [&] { return epsilon_endpoints(); });
    std::cout << (failures_ == 0 ? "ALL PASS" : std::to_string(failures_) + " FAILED") << std::endl;
    return failures_ == 0 ? 0 : 1;
  }

 private:
  void check(const std::string& name, const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures_;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " ("
              << fmt(minutes_since(start), 1) << " min)" << std::endl;
  }

  PhaseConfig base_config() const {
    PhaseConfig cfg;
    cfg.data_dir = HOMEDQN_SOURCE_DATA_DIR;
    return cfg;
  }

  /// Default desk pre-training; later checks start from this agent.
  Outcome desk_convergence() {
    auto cfg = base_config();
    cfg.eval_every = 50000;
    const auto start = Clock::now();
    converged_ = make_agent(cfg);
    const auto factory = desk_.synthetic(cfg);
    const auto r = run_phase(cfg, *converged_, desk_.renderer, factory, factory);
    const double minutes = minutes_since(start);
    converged_->save_checkpoint(work_ / "desk_seed0.aqnw");
    write_file(work_ / "desk_seed0_metrics.csv", metrics_csv(r.rows));
    converged_f1_ = r.final_eval.scores.micro_f1;
    converged_accuracy_ = accuracy(r.final_eval);
    const bool pass = converged_f1_ >= 0.95 && converged_->interactions() <= 200000 && minutes <= 45;
    return {pass, "micro F1 " + fmt(converged_f1_) + " after " +
                      std::to_string(converged_->interactions()) + " interactions in " +
                      fmt(minutes, 1) + " min"};
  }

  DqnAgent copy_converged(const AgentConfig& agent_cfg, std::uint64_t seed) const {
    if (!converged_) throw Error("needs the converged desk agent");
    DqnAgent a(converged_->online(), agent_cfg, seed);
    a.set_interactions(converged_->interactions());
    return a;
  }

  /// Adapts the converged agent under the three-second window and the
  /// do-nothing penalty, then scores the windowed stream.
  Outcome windowed_sanity() {
    auto cfg = base_config();
    cfg.phase = PhaseKind::adapt;
    cfg.reward.mode = RewardMode::windowed;
    cfg.agent.td_clip = 1;
    cfg.agent.epsilon.start = 0.1;
    cfg.agent.epsilon.end = 0.1;
    cfg.total_steps = 100000;
    cfg.eval_every = 50000;
    cfg.eval_steps = 6000;
    auto agent = copy_converged(cfg.agent, 1);
    const auto factory = desk_.synthetic(cfg);
    const auto r = run_phase(cfg, agent, desk_.renderer, factory, factory);
    windowed_ = std::make_unique<DqnAgent>(std::move(agent));
    const auto& c = r.final_eval.confusion;
    const double nothing = class_recall(c, kDoNothing);
    const double macro = score(c, kDoNothing).macro_f1;
    return {nothing >= 0.9 && macro >= 0.85,
            "do-nothing recall " + fmt(nothing) + ", other-action macro F1 " + fmt(macro)};
  }

  Outcome tabular_oracle() {
    QTable<int> table;
    const double gap = chain::train_table(table, 3000, 0.1, 0.9);
    const auto oracle = chain::oracle_policy(0.9);
    bool same = true;
    for (int s = 0; s < chain::kStates; ++s) same = same && table.greedy(s) == oracle[static_cast<std::size_t>(s)];
    return {gap < 1e-3 && same, "max |Q - Q*| " + format_double(gap) + (same ? ", policy matches" : ", policy differs")};
  }

  Outcome deep_vs_tabular() {
    TabularTable table;
    GeneratorConfig g;
    g.seed = 7;
    SyntheticEnvironment train(desk_.rules, desk_.renderer.manifest(), g, {});
    Rng rng(7);
    train_tabular(table, train, 100000, {}, rng);
    g.seed = 8;
    SyntheticEnvironment test(desk_.rules, desk_.renderer.manifest(), g, {});
    const double tab = tabular_accuracy(table, test, 5000);
    if (!converged_) throw Error("needs the converged desk agent");
    const double deep = converged_accuracy_;
    return {tab >= 0.95 && deep >= 0.95, "tabular " + fmt(tab) + ", deep " + fmt(deep)};
  }

  Outcome gradient_check() {
    double worst = 0;
    bool all = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      FiniteDiffOptions opt;
      opt.seed = seed;
      const auto r = finite_diff_check(NetworkSpec::desk(), opt);
      all = all && r.passed;
      worst = std::max(worst, r.max_rel_error);
    }
    FiniteDiffOptions mutated;
    mutated.mutate_layer = 2;
    const auto m = finite_diff_check(NetworkSpec::desk(), mutated);
    return {all && !m.passed, "max relative error " + format_double(worst) + " over 5 seeds, mutated gradient error " +
                                  fmt(m.max_rel_error, 4)};
  }

  Outcome shape_conformance() {
    const auto full = World::load("full", HOMEDQN_SOURCE_DATA_DIR);
    Network<float> net(NetworkSpec::full());
    net.init_glorot(0);
    const auto img = full.renderer.render(golden::reference_state(full));
    std::vector<float> x(img.pixels.begin(), img.pixels.end());
    for (auto& v : x) v /= 255.0f;
    const auto out = net.forward(x, 1);
    const std::vector<std::size_t> expected{16 * 64 * 64, 32 * 21 * 21, 64 * 10 * 10, 64 * 8 * 8, 512, 33};
    std::vector<std::size_t> got;
    for (std::size_t l = 0; l < net.layers().size(); ++l) got.push_back(net.activation(l).size());
    const std::vector<FeatureShape> shapes{{16, 64}, {32, 21}, {64, 10}, {64, 8}, {512, 1}, {33, 1}};
    const int flat = net.layers()[4].in_ch;
    const bool pass = got == expected && net.shapes() == shapes && flat == 4096 && out.size() == 33 &&
                      std::all_of(out.begin(), out.end(), [](float v) { return std::isfinite(v); });
    std::string chain;
    for (const auto& sh : net.shapes()) {
      if (sh.side == 1 && chain.find(" / " + std::to_string(flat)) == std::string::npos) {
        chain += " / " + std::to_string(flat);
      }
      chain += (chain.empty() ? "" : " / ") +
               (sh.side > 1 ? std::to_string(sh.channels) + "x" + std::to_string(sh.side) + "x" +
                                  std::to_string(sh.side)
                            : std::to_string(sh.channels));
    }
    return {pass, chain + ", activations " + (got == expected ? "match" : "differ")};
  }

  Outcome sensor_mask_recovery() {
    auto cfg = base_config();
    cfg.total_steps = 50000;
    cfg.eval_every = 10000;
    cfg.mask = presence_mask(desk_.renderer.manifest());
    auto agent = copy_converged(cfg.agent, 2);
    const auto report = run_mask_experiment(agent, cfg, desk_);
    const double before = report.baseline.scores.micro_f1;
    const double masked = report.adaptation.rows.front().f1_micro;
    const double after = report.adaptation.rows.back().f1_micro;
    const bool presence_ok = before - masked >= 0.05 && before - after <= 0.05;

    if (!windowed_) throw Error("needs the windowed agent");
    auto windowed = base_config();
    windowed.reward.mode = RewardMode::windowed;
    auto env = desk_.synthetic(windowed)(99);
    const auto cmd = evaluate(*windowed_, *env, 6000, desk_.renderer, SensorMask::parse("command"));
    const double cmd_f1 = cmd.scores.micro_f1;
    const bool command_ok = cmd_f1 < 0.5 && cmd_f1 > 1.0 / kActionCount;
    return {presence_ok && command_ok, "presence: " + fmt(before) + " -> " + fmt(masked) + " -> " +
                                           fmt(after) + " after 50000; command mask F1 " + fmt(cmd_f1)};
  }

  Outcome sweep_harness() {
    auto cfg = base_config();
    cfg.total_steps = 2400;
    cfg.eval_every = 2400;
    cfg.eval_steps = 200;
    bool calls_ok = true;
    std::map<int, std::vector<double>> per_batch;
    std::string csv;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      cfg.seed = seed;
      const auto rows = run_sweep(parse_sweep_grid("4096/16/12,4096/32/12,4096/64/12"), cfg, desk_);
      for (const auto& r : rows) {
        calls_ok = calls_ok && r.learn_calls == static_cast<std::uint64_t>(cfg.total_steps / r.point.update_freq);
        per_batch[r.point.minibatch_size].push_back(r.mean_learn_ms);
      }
      csv = sweep_csv(rows);
    }
    write_file(work_ / "sweep.csv", csv);
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    const double m16 = median(per_batch[16]);
    const double m32 = median(per_batch[32]);
    const double m64 = median(per_batch[64]);
    const bool ratio = csv.substr(0, csv.find('\n')).find("score_time_ratio") != std::string::npos;
    return {calls_ok && m16 < m32 && m32 < m64 && ratio,
            std::string(calls_ok ? "learn calls = steps/update_freq" : "learn call count mismatch") +
                ", median ms per learn " + fmt(m16, 2) + " < " + fmt(m32, 2) + " < " + fmt(m64, 2) +
                (ratio ? ", ratio column present" : ", ratio column missing")};
  }

  Outcome determinism() {
    auto cfg = base_config();
    cfg.total_steps = 6000;
    cfg.eval_every = 3000;
    cfg.eval_steps = 500;
    cfg.deterministic = true;
    std::string metrics[2];
    std::string weights[2];
    for (int i = 0; i < 2; ++i) {
      auto agent = make_agent(cfg);
      const auto factory = desk_.synthetic(cfg);
      metrics[i] = metrics_csv(run_phase(cfg, *agent, desk_.renderer, factory, factory).rows);
      const auto path = work_ / ("determinism_" + std::to_string(i) + ".aqnw");
      agent->save_checkpoint(path);
      weights[i] = read_file(path);
    }
    bool golden = true;
    const fs::path fixtures = HOMEDQN_FIXTURE_DIR;
    for (const char* p : {"desk", "full"}) {
      const auto w = World::load(p, HOMEDQN_SOURCE_DATA_DIR);
      golden = golden && export_pgm(w.renderer.render(golden::reference_state(w))) ==
                             read_file(fixtures / golden::image_file(p));
    }
    golden = golden && golden::q_text(desk_) == read_file(fixtures / golden::kQFile);
    const bool same = metrics[0] == metrics[1] && weights[0] == weights[1];
    return {same && golden, std::string(same ? "identical metrics and weights" : "runs differ") +
                                (golden ? ", golden images and outputs match" : ", golden mismatch")};
  }

  Outcome losocv_fixture() {
    const auto start = Clock::now();
    auto cfg = base_config();
    cfg.reward.mode = RewardMode::windowed;
    cfg.agent.td_clip = 1;
    cfg.total_steps = 20000;
    cfg.eval_every = 20000;
    cfg.eval_steps = 3000;
    const auto& m = desk_.renderer.manifest();
    std::vector<AlignedSample> all;
    std::set<std::string> participants;
    for (const auto& p : load_corpus(fs::path(HOMEDQN_SOURCE_DATA_DIR) / "corpus", m)) {
      auto s = align(p, m);
      all.insert(all.end(), s.begin(), s.end());
      participants.insert(p.participant);
    }
    bool partition = true;
    std::set<std::string> held;
    for (const auto& f : losocv_folds(all)) {
      held.insert(f.held_out);
      partition = partition && f.adaptation.size() + f.test.size() == all.size();
      for (const auto& s : f.test) partition = partition && s.participant == f.held_out;
      for (const auto& s : f.adaptation) partition = partition && s.participant != f.held_out;
    }
    partition = partition && held == participants;
    const auto base = copy_converged(cfg.agent, 4);
    const auto report = run_losocv(base, all, cfg, desk_.renderer);
    const double minutes = minutes_since(start);
    std::string per_fold;
    for (const auto& f : report.folds) per_fold += " " + f.held_out + "=" + fmt(f.result.final_eval.scores.micro_f1);
    const bool pass = report.folds.size() == 3 && partition && report.aggregate_f1 >= 0.95 && minutes < 20;
    return {pass, std::to_string(report.folds.size()) + " folds," + per_fold + ", aggregate " +
                      fmt(report.aggregate_f1) + (partition ? ", partitions hold" : ", partition broken") +
                      ", " + fmt(minutes, 1) + " min"};
  }

  Outcome epsilon_endpoints() {
    const EpsilonSchedule e;
    const bool pass = e.at(0) == 0.99 && e.at(200000) == 0.5 && e.at(0, Phase::eval) == 0.0 &&
                      e.at(200000, Phase::eval) == 0.0;
    return {pass, "eps(0)=" + format_double(e.at(0)) + " eps(200000)=" + format_double(e.at(200000)) +
                      " eps(eval)=" + format_double(e.at(0, Phase::eval))};
  }

  fs::path work_;
  World desk_;
  std::unique_ptr<DqnAgent> converged_;
  std::unique_ptr<DqnAgent> windowed_;
  double converged_f1_ = 0;
  double converged_accuracy_ = 0;
  int failures_ = 0;
};

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "homedqn_acceptance";
  spdlog::set_level(spdlog::level::warn);
  try {
    return Acceptance(work).run();
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 2;
  }
}
