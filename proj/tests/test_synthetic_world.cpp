#include <doctest.h>

#include <map>

#include "homedqn/harness.hpp"
#include "homedqn/synthetic_world.hpp"
#include "test_support.hpp"

using namespace homedqn;

namespace {

const World& desk() {
  static const World w = World::load("desk", test::data_dir());
  return w;
}

int action(Verb v, const char* device, Room place) { return *find_action(v, device, place); }

Generator make_gen(GeneratorConfig cfg = {}, bool silent = true) {
  return Generator(desk().rules, desk().renderer.manifest(), cfg, silent);
}

}  // namespace

constexpr const char* kOtherRooms =
    "activities bathroom: none\nactivities bedroom: none\nactivities study: none\n";
constexpr const char* kAllRooms =
    "activities kitchen: cook none\nactivities bathroom: none\n"
    "activities bedroom: none\nactivities study: none\n";

TEST_SUITE("synthetic_world") {
  TEST_CASE("reference rule examples") {
    auto gen = make_gen();
    const auto sink = gen.annotate({Room::kitchen, Activity::wash_dishes, {Verb::turn_on, Object::light}});
    CHECK(sink.expected_action == action(Verb::turn_on, "light_sink", Room::kitchen));
    const auto cook = gen.annotate({Room::kitchen, Activity::cook, {Verb::turn_on, Object::light}});
    CHECK(cook.expected_action == action(Verb::turn_on, "light_sink", Room::kitchen));
    const auto blinds = gen.annotate({Room::kitchen, Activity::none, {Verb::open, Object::blinds}});
    CHECK(blinds.expected_action == action(Verb::open, "blinds", Room::kitchen));
    const auto silent = gen.annotate({Room::study, Activity::read, {}});
    CHECK(silent.expected_action == kDoNothing);
  }

  TEST_CASE("annotated space stays within 324 states") {
    const auto& rules = desk().rules;
    const auto all = rules.valid_triples(true);
    CHECK(all.size() <= 324);
    CHECK(all.size() > rules.valid_triples(false).size());
    CHECK(std::is_sorted(all.begin(), all.end()));
  }

  TEST_CASE("deterministic generator is a function of the triple") {
    auto gen = make_gen();
    std::map<AnnotatedTriple, int> seen;
    for (int i = 0; i < 3000; ++i) {
      const auto a = gen.generate_annotated();
      const auto [it, fresh] = seen.emplace(a.triple(), a.expected_action);
      CHECK(it->second == a.expected_action);
    }
  }

  TEST_CASE("non-deterministic generator reaches the alternatives") {
    GeneratorConfig cfg;
    cfg.deterministic = false;
    auto gen = make_gen(cfg);
    std::set<int> answers;
    for (int i = 0; i < 200; ++i) {
      answers.insert(gen.annotate({Room::kitchen, Activity::none, {Verb::turn_on, Object::light}}).expected_action);
    }
    CHECK(answers.size() == 2);
  }

  TEST_CASE("same seed gives the same samples") {
    auto a = make_gen();
    auto b = make_gen();
    for (int i = 0; i < 50; ++i) {
      const auto x = a.generate_annotated();
      const auto y = b.generate_annotated();
      CHECK(x.triple() == y.triple());
      CHECK(a.realize_sensors(x) == b.realize_sensors(y));
    }
  }

  TEST_CASE("presence constraints") {
    const auto& m = desk().renderer.manifest();
    for (double p : {0.0, 1.0}) {
      GeneratorConfig cfg;
      cfg.adjacency_presence_prob = p;
      auto gen = make_gen(cfg);
      const auto s = gen.realize_sensors(gen.annotate({Room::kitchen, Activity::cook, {}}));
      for (const auto& spec : m.sensors()) {
        if (!spec.is_presence()) continue;
        const double v = s.readings.at(spec.id);
        if (spec.room == Room::kitchen) CHECK(v == 1);
        else if (spec.room == Room::bedroom) CHECK(v == p);
        else if (spec.room == Room::study) CHECK(v == 0);
      }
    }
  }

  TEST_CASE("activity sensors follow the rules and states validate") {
    auto gen = make_gen();
    const auto& m = desk().renderer.manifest();
    for (int i = 0; i < 200; ++i) {
      const auto a = gen.generate_annotated();
      const auto s = gen.realize_sensors(a);
      CHECK(validate_state(s, m).empty());
      if (a.location == Room::kitchen && a.activity == Activity::wash_dishes) {
        CHECK(s.readings.at("kitchen_water") >= 8);
      }
      if (!(a.location == Room::kitchen && a.activity == Activity::cook)) {
        CHECK(s.readings.at("kitchen_hotplate") == 0);
      }
    }
  }

  TEST_CASE("restricted mode holds irrelevant sensors at their midpoint") {
    GeneratorConfig cfg;
    cfg.restricted = true;
    auto gen = make_gen(cfg);
    const auto s = gen.realize_sensors(gen.annotate({Room::study, Activity::converse, {}}));
    CHECK(s.readings.at("bathroom_humidity") == 50);
    CHECK(s.readings.at("bathroom_shower") == 0);
    CHECK(s.readings.at("study_electricity") == 1000);
  }

  TEST_CASE("retry rule") {
    for (int threshold = 1; threshold <= 4; ++threshold) {
      for (int tries = 0; tries <= threshold + 1; ++tries) {
        const auto hit = next_try(true, tries, threshold);
        CHECK(hit.advanced);
        CHECK(hit.tries == 0);
        const auto miss = next_try(false, tries, threshold);
        CHECK(miss.advanced == (tries > threshold));
        CHECK(miss.tries == (tries > threshold ? 0 : tries + 1));
      }
    }
    CHECK(next_try(false, 0, 3).tries == 1);
    CHECK(next_try(false, 4, 3).advanced);
  }

  TEST_CASE("rewards") {
    const int sink = action(Verb::turn_on, "light_sink", Room::kitchen);
    const int ceiling = action(Verb::turn_on, "light_ceiling", Room::kitchen);
    const int blinds = action(Verb::open, "blinds", Room::study);
    RewardConfig plain;
    CHECK(reward(sink, sink, plain) == 1);
    CHECK(reward(sink, ceiling, plain) == -1);
    CHECK(reward(blinds, kDoNothing, plain) == -1);
    RewardConfig windowed;
    windowed.mode = RewardMode::windowed;
    CHECK(reward(blinds, kDoNothing, windowed) == -192);
    CHECK(reward(kDoNothing, kDoNothing, windowed) == 1);
    CHECK(reward(kDoNothing, blinds, windowed) == -1);
    RewardConfig bad;
    bad.wrong = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("window of three states") {
    auto gen = make_gen();
    const auto a = gen.annotate({Room::study, Activity::read, {Verb::close, Object::blinds}});
    auto s = gen.realize_sensors(a);
    s.timestamp = 100;
    const auto w = window_samples(a, s);
    REQUIRE(w.size() == 3);
    CHECK(w[0].state.timestamp == 98);
    CHECK(w[1].state.timestamp == 99);
    CHECK(w[2].state.timestamp == 100);
    CHECK(w[0].state.command.empty());
    CHECK(w[1].state.command.empty());
    CHECK(w[2].state.command == a.command);
    CHECK(w[0].expected_action == kDoNothing);
    CHECK(w[1].expected_action == kDoNothing);
    CHECK(w[2].expected_action == a.expected_action);
  }

  TEST_CASE("environment advances per the retry rule and bounds episode reward") {
    RewardConfig rc;
    SyntheticEnvironment env(desk().rules, desk().renderer.manifest(), {}, rc);
    for (int episode = 0; episode < 50; ++episode) {
      const auto serial = env.observe().serial;
      const int expected = env.observe().expected_action;
      const int wrong = (expected + 1) % kActionCount;
      double sum = 0;
      int steps = 0;
      const int fail_first = episode % 6;
      StepOutcome out;
      do {
        out = env.perform_action(steps < fail_first ? wrong : expected);
        sum += out.reward;
        ++steps;
      } while (!out.advanced);
      CHECK(env.observe().serial == serial + 1);
      CHECK(sum <= 1);
      CHECK(steps == std::min(fail_first, 4) + 1);
    }
  }

  TEST_CASE("windowed environment serves a 2:1 do-nothing ratio") {
    RewardConfig rc;
    rc.mode = RewardMode::windowed;
    SyntheticEnvironment env(desk().rules, desk().renderer.manifest(), {}, rc);
    int nothing = 0;
    int other = 0;
    for (int i = 0; i < 300; ++i) {
      const int expected = env.observe().expected_action;
      (expected == kDoNothing ? nothing : other)++;
      env.perform_action(expected);
    }
    CHECK(nothing == 2 * other);
  }

  TEST_CASE("sample stream never runs dry") {
    SyntheticEnvironment env(desk().rules, desk().renderer.manifest(), {}, {});
    for (int i = 0; i < 5000; ++i) env.perform_action(env.observe().expected_action);
    CHECK(env.observe().serial == 5000);
  }

  TEST_CASE("replay environment cycles through all groups") {
    std::vector<std::vector<Observation>> groups(4);
    for (int g = 0; g < 4; ++g) {
      Observation o;
      o.expected_action = g;
      groups[static_cast<std::size_t>(g)].push_back(o);
    }
    ReplayEnvironment env(groups, 3, {});
    std::map<int, int> count;
    for (int i = 0; i < 40; ++i) {
      ++count[env.observe().expected_action];
      env.perform_action(env.observe().expected_action);
    }
    for (int g = 0; g < 4; ++g) CHECK(count[g] == 10);
    CHECK_THROWS_AS(ReplayEnvironment({}, 0, {}), Error);
  }

  TEST_CASE("rule table parsing") {
    const auto t = RuleTable::parse(
        std::string(kOtherRooms) +
        "activities kitchen: cook none\n"
        "kitchen;*;turn_on;light -> turn_on;light_sink;kitchen\n"
        "kitchen/cook -> kitchen_hotplate;1\n"
        "kitchen/* -> kitchen_sound;40..100\n");
    CHECK(t.action_rules().size() == 1);
    CHECK(t.sensor_rules().size() == 2);
    CHECK(t.relevant_sensors().count("kitchen_sound") == 1);
    CHECK(t.valid_triples(false).size() == 2);
    CHECK(t.valid_triples(true).size() == 7);
    CHECK_THROWS_AS(t.first_match({Room::kitchen, Activity::cook, {Verb::open, Object::blinds}}), Error);
    CHECK_THROWS_AS(RuleTable::parse("kitchen;*;turn_on;light -> turn_on;toaster;kitchen\n"), Error);
    CHECK_THROWS_AS(RuleTable::parse("kitchen/cook -> x;5..1\n"), Error);
    CHECK_THROWS_AS(RuleTable::parse("no arrow here\n"), Error);
  }

  TEST_CASE("rules are checked against the manifest") {
    CHECK_NOTHROW(desk().rules.check_against(desk().renderer.manifest()));
    const auto unknown = RuleTable::parse(std::string(kAllRooms) + "kitchen/cook -> kitchen_toaster;1\n");
    CHECK_THROWS_AS(unknown.check_against(desk().renderer.manifest()), Error);
    const auto range = RuleTable::parse(std::string(kAllRooms) + "kitchen/cook -> kitchen_sound;50..500\n");
    CHECK_THROWS_AS(range.check_against(desk().renderer.manifest()), Error);
  }
}
