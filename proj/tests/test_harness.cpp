#include <doctest.h>

#include "homedqn/harness.hpp"
#include "test_support.hpp"

using namespace homedqn;

namespace {

const World& desk() {
  static const World w = World::load("desk", test::data_dir());
  return w;
}

PhaseConfig small_config() {
  PhaseConfig cfg;
  cfg.total_steps = 120;
  cfg.eval_every = 60;
  cfg.eval_steps = 50;
  cfg.deterministic = true;
  cfg.data_dir = test::data_dir();
  return cfg;
}

DqnAgent always(int action) {
  Network<float> net(NetworkSpec::desk());
  net.layers().back().biases[static_cast<std::size_t>(action)] = 1;
  return DqnAgent(std::move(net), {}, 0);
}

Confusion sample_confusion() {
  Confusion c;
  for (int i = 0; i < 4; ++i) c.add(0, 0);
  c.add(1, 1);
  c.add(1, 1);
  c.add(1, 0);
  c.add(2, 3);
  c.add(kDoNothing, kDoNothing);
  c.add(kDoNothing, kDoNothing);
  return c;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("scores of a ten-decision confusion") {
    const auto c = sample_confusion();
    CHECK(c.total() == 10);
    const auto s = score(c);
    CHECK(s.micro_precision == doctest::Approx(0.8));
    CHECK(s.micro_recall == doctest::Approx(0.8));
    CHECK(s.micro_f1 == doctest::Approx(0.8));
    CHECK(s.macro_precision == doctest::Approx(0.56));
    CHECK(s.macro_recall == doctest::Approx(8.0 / 15.0));
    CHECK(s.macro_f1 == doctest::Approx((8.0 / 9.0 + 0.8 + 1.0) / 5.0));

    const auto without = score(c, kDoNothing);
    CHECK(without.micro_precision == doctest::Approx(0.75));
    CHECK(without.micro_recall == doctest::Approx(0.75));
    CHECK(without.macro_precision == doctest::Approx(0.45));
    CHECK(without.macro_recall == doctest::Approx(5.0 / 12.0));
    CHECK(without.macro_f1 == doctest::Approx((8.0 / 9.0 + 0.8) / 4.0));

    CHECK(class_recall(c, kDoNothing) == 1.0);
    CHECK(class_recall(c, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(class_recall(c, 5) == 1.0);
    CHECK(score(Confusion{}).micro_f1 == 0.0);
    Confusion bad;
    CHECK_THROWS_AS(bad.add(0, 33), Error);
  }

  TEST_CASE("uniform guessing scores near one in 33") {
    Confusion c;
    Rng rng(1);
    for (int i = 0; i < 66000; ++i) {
      c.add(static_cast<int>(rng.below(kActionCount)), static_cast<int>(rng.below(kActionCount)));
    }
    CHECK(score(c).micro_f1 == doctest::Approx(1.0 / 33.0).epsilon(0.1));
  }

  TEST_CASE("evaluation scores every decision") {
    RewardConfig rc;
    rc.mode = RewardMode::windowed;
    SyntheticEnvironment env(desk().rules, desk().renderer.manifest(), {}, rc);
    auto agent = always(kDoNothing);
    const auto r = evaluate(agent, env, 700, desk().renderer);
    CHECK(r.decisions == 700);
    CHECK(r.episodes == 300);
    CHECK(r.confusion.at(kDoNothing, kDoNothing) == 200);
    CHECK(class_recall(r.confusion, kDoNothing) == 1.0);
    CHECK(r.avg_reward_per_episode() == doctest::Approx((200.0 - 500.0 * 192.0) / 300.0));
    CHECK(r.scores.micro_f1 == doctest::Approx(200.0 / 700.0));
  }

  TEST_CASE("phase config validation") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.eval_every = 500;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.render = "huge";
    CHECK_THROWS_AS(cfg.validate(), Error);
  }

  TEST_CASE("config keys") {
    PhaseConfig cfg;
    const auto& keys = config_keys();
    CHECK(std::find(keys.begin(), keys.end(), "agent.update_freq") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "reward.mode") != keys.end());
    set_config_key(cfg, "agent.minibatch_size", "16");
    CHECK(cfg.agent.minibatch_size == 16);
    apply_config_text(cfg, "# comment\nreward.mode = windowed  # trailing\n\ntotal_steps=1000\nmask = command\n");
    CHECK(cfg.reward.mode == RewardMode::windowed);
    CHECK(cfg.total_steps == 1000);
    CHECK(cfg.mask.hides("command"));
    CHECK_THROWS_AS(set_config_key(cfg, "agent.colour", "1"), Error);
    CHECK_THROWS_AS(set_config_key(cfg, "total_steps", "many"), Error);
    CHECK_THROWS_AS(set_config_key(cfg, "total_steps", "-5"), Error);
    CHECK_THROWS_AS(apply_config_text(cfg, "total_steps 5\n"), Error);
    PhaseConfig copy;
    apply_config_text(copy, format_config(cfg));
    CHECK(format_config(copy) == format_config(cfg));
  }

  TEST_CASE("metrics csv") {
    MetricsRow row;
    row.phase = "pretrain";
    row.step = 10;
    row.episodes = 4;
    row.avg_reward_per_episode = 0.5;
    row.precision = 1;
    row.recall = 0.25;
    row.f1_micro = 0.75;
    row.f1_macro = 0.125;
    row.epsilon = 0.99;
    CHECK(metrics_csv({row}) ==
          "phase;step;episodes;avg_reward_per_episode;precision;recall;f1_micro;f1_macro;epsilon;wall_ms\n"
          "pretrain;10;4;0.5;1;0.25;0.75;0.125;0.99;0\n");
  }

  TEST_CASE("interaction loop") {
    const auto cfg = small_config();
    auto agent = make_agent(cfg);
    std::int64_t hooked = 0;
    const auto factory = desk().synthetic(cfg);
    const auto r = run_phase(cfg, *agent, desk().renderer, factory, factory,
                             [&](std::int64_t) { ++hooked; });
    CHECK(hooked == 120);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].step == 60);
    CHECK(r.rows[1].step == 120);
    CHECK(r.rows[1].epsilon == doctest::Approx(cfg.agent.epsilon.at(120)));
    CHECK(r.learn_calls == 10);
    CHECK(r.wall_ms == 0);
    CHECK(agent->interactions() == 120);
    CHECK(r.final_eval.decisions == 50);
  }

  TEST_CASE("deterministic runs repeat exactly") {
    const auto cfg = small_config();
    std::string csv[2];
    std::string weights[2];
    for (int i = 0; i < 2; ++i) {
      auto agent = make_agent(cfg);
      const auto factory = desk().synthetic(cfg);
      csv[i] = metrics_csv(run_phase(cfg, *agent, desk().renderer, factory, factory).rows);
      weights[i] = serialize_weights(agent->online());
    }
    CHECK(csv[0] == csv[1]);
    CHECK(weights[0] == weights[1]);
  }

  TEST_CASE("render profile must match the network") {
    auto cfg = small_config();
    auto agent = make_agent(cfg);
    const auto full = World::load("full", test::data_dir());
    const auto factory = full.synthetic(cfg);
    CHECK_THROWS_AS(run_phase(cfg, *agent, full.renderer, factory, factory), Error);
  }

  TEST_CASE("sweep grid") {
    const auto grid = parse_sweep_grid(" 4096/32/12, 100/16/4 ,");
    REQUIRE(grid.size() == 2);
    CHECK(grid[1].target_q == 100);
    CHECK(grid[1].minibatch_size == 16);
    CHECK(grid[1].update_freq == 4);
    CHECK_THROWS_AS(parse_sweep_grid("4096/32"), Error);
    CHECK_THROWS_AS(parse_sweep_grid(""), Error);
  }

  TEST_CASE("sweep rows") {
    auto cfg = small_config();
    cfg.total_steps = 48;
    cfg.eval_every = 48;
    cfg.eval_steps = 20;
    const auto rows = run_sweep(parse_sweep_grid("4096/8/12,4096/8/6"), cfg, desk());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].learn_calls == 4);
    CHECK(rows[1].learn_calls == 8);
    const auto csv = sweep_csv(rows);
    CHECK(csv.rfind("target_q;minibatch_size;update_freq;f1_micro;avg_reward;wall_ms;learn_calls;"
                    "mean_learn_ms;score_time_ratio\n",
                    0) == 0);
    CHECK(split(csv, '\n').size() == 4);
  }

  TEST_CASE("leave-one-subject-out pipeline") {
    auto cfg = small_config();
    cfg.total_steps = 30;
    cfg.eval_every = 30;
    cfg.eval_steps = 30;
    const auto& m = desk().renderer.manifest();
    std::vector<AlignedSample> all;
    for (const auto& p : load_corpus(test::data_dir() / "corpus", m)) {
      auto s = align(p, m);
      all.insert(all.end(), s.begin(), s.end());
    }
    const auto base = make_agent(cfg);
    const auto report = run_losocv(*base, all, cfg, desk().renderer);
    REQUIRE(report.folds.size() == 3);
    for (const auto& f : report.folds) {
      CHECK(f.adaptation_samples == 240);
      CHECK(f.test_samples == 120);
      CHECK(f.result.final_eval.decisions == 30);
    }
  }

  TEST_CASE("mask experiment evaluates before adapting") {
    auto cfg = small_config();
    cfg.mask = presence_mask(desk().renderer.manifest());
    auto agent = make_agent(cfg);
    const auto report = run_mask_experiment(*agent, cfg, desk());
    CHECK(report.baseline.decisions == cfg.eval_steps);
    REQUIRE(report.adaptation.rows.size() == 3);
    CHECK(report.adaptation.rows[0].step == 0);
    CHECK(report.adaptation.rows[0].phase == "adapt");
  }
}
