#include "homedqn/synthetic_world.hpp"

#include <algorithm>
#include <cmath>

namespace homedqn {

namespace {

constexpr std::int64_t kSampleSpacing = 10;

template <class T, class Parse>
std::optional<T> parse_wildcard(std::string_view text, Parse parse) {
  text = trim(text);
  if (text == "*") return std::nullopt;
  return parse(text);
}

std::pair<std::string_view, std::string_view> split_arrow(std::string_view line) {
  const auto pos = line.find("->");
  if (pos == std::string_view::npos) throw Error("missing '->'");
  return {trim(line.substr(0, pos)), trim(line.substr(pos + 2))};
}

double round_reading(double v, double lo, double hi) {
  return std::clamp(std::round(v * 1000.0) / 1000.0, lo, hi);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (!(adjacency_presence_prob >= 0 && adjacency_presence_prob <= 1)) {
    throw Error("adjacency_presence_prob must lie in [0, 1]");
  }
}

std::string_view to_string(RewardMode mode) {
  return mode == RewardMode::plain ? "plain" : "windowed";
}

RewardMode parse_reward_mode(std::string_view text) {
  text = trim(text);
  if (text == "plain") return RewardMode::plain;
  if (text == "windowed") return RewardMode::windowed;
  throw Error("unknown reward mode '" + std::string(text) + "'");
}

void RewardConfig::validate() const {
  if (!(correct > 0 && 0 > wrong && wrong >= wrong_nothing)) {
    throw Error("reward values must satisfy correct > 0 > wrong >= wrong_nothing");
  }
}

double reward(int expected, int predicted, const RewardConfig& cfg) {
  if (predicted == expected) return cfg.correct;
  if (cfg.mode == RewardMode::windowed && predicted == kDoNothing) return cfg.wrong_nothing;
  return cfg.wrong;
}

TryOutcome next_try(bool matched, int tries, int threshold) {
  if (matched || tries > threshold) return {true, 0};
  return {false, tries + 1};
}

bool ActionRule::matches(const AnnotatedTriple& t) const {
  return (!location || *location == t.location) && (!activity || *activity == t.activity) &&
         command == t.command;
}

bool SensorRule::matches(Room room, Activity act) const {
  return (!location || *location == room) && (!activity || *activity == act);
}

RuleTable RuleTable::parse(std::string_view text) {
  RuleTable table;
  int line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    try {
      if (line.starts_with("activities ")) {
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) throw Error("expected 'activities <room>: ...'");
        const Room room = parse_room(line.substr(11, colon - 11));
        auto& list = table.activities_[static_cast<std::size_t>(room)];
        for (auto word : split(trim(line.substr(colon + 1)), ' ')) {
          if (!trim(word).empty()) list.push_back(parse_activity(word));
        }
        continue;
      }
      const auto [lhs, rhs] = split_arrow(line);
      if (lhs.find('/') != std::string_view::npos) {
        const auto scope = split(lhs, '/');
        const auto target = split(rhs, ';');
        if (scope.size() != 2 || target.size() != 2) throw Error("expected 'loc/act -> id;value'");
        SensorRule rule;
        rule.location = parse_wildcard<Room>(scope[0], parse_room);
        rule.activity = parse_wildcard<Activity>(scope[1], parse_activity);
        rule.sensor = std::string(trim(target[0]));
        const auto range = trim(target[1]);
        if (const auto dots = range.find(".."); dots != std::string_view::npos) {
          rule.lo = parse_double(range.substr(0, dots), "range lower bound");
          rule.hi = parse_double(range.substr(dots + 2), "range upper bound");
          if (rule.lo > rule.hi) throw Error("empty range");
        } else {
          rule.lo = rule.hi = parse_double(range, "value");
        }
        rule.line = line_no;
        table.relevant_.insert(rule.sensor);
        table.sensors_.push_back(std::move(rule));
      } else {
        const auto when = split(lhs, ';');
        const auto then = split(rhs, ';');
        if (when.size() != 4 || then.size() != 3) {
          throw Error("expected 'loc;act;verb;object -> verb;device;place'");
        }
        ActionRule rule;
        rule.location = parse_wildcard<Room>(when[0], parse_room);
        rule.activity = parse_wildcard<Activity>(when[1], parse_activity);
        rule.command = {parse_verb(when[2]), parse_object(when[3])};
        if (rule.command.empty()) throw Error("action rules need a command");
        const auto place = trim(then[2]);
        const auto action = find_action(
            parse_verb(then[0]), trim(then[1]),
            place == "nowhere" ? std::nullopt : std::optional<Room>(parse_room(place)));
        if (!action) throw Error("no catalog action '" + std::string(rhs) + "'");
        rule.action = *action;
        rule.line = line_no;
        table.actions_.push_back(rule);
      }
    } catch (const Error& e) {
      throw Error("rules line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (Room room : kRooms) {
    if (table.activities(room).empty()) {
      throw Error("rules: no activities listed for " + std::string(to_string(room)));
    }
  }
  return table;
}

RuleTable RuleTable::load(const std::filesystem::path& path) { return parse(read_file(path)); }

RuleTable RuleTable::reference(const std::filesystem::path& data_dir) {
  return load(data_dir / "rules.txt");
}

const std::vector<Activity>& RuleTable::activities(Room room) const {
  return activities_[static_cast<std::size_t>(room)];
}

std::vector<int> RuleTable::candidates(const AnnotatedTriple& t) const {
  std::vector<int> out;
  for (const auto& r : actions_) {
    if (r.matches(t)) out.push_back(r.action);
  }
  return out;
}

int RuleTable::first_match(const AnnotatedTriple& t) const {
  if (t.command.empty()) return kDoNothing;
  for (const auto& r : actions_) {
    if (r.matches(t)) return r.action;
  }
  throw Error("no rule answers " + std::string(to_string(t.location)) + "/" +
              std::string(to_string(t.activity)) + " " + to_string(t.command));
}

std::vector<AnnotatedTriple> RuleTable::valid_triples(bool include_silent) const {
  std::set<VoiceCommand> commands;
  for (const auto& r : actions_) commands.insert(r.command);
  std::set<AnnotatedTriple> out;
  for (Room room : kRooms) {
    for (Activity act : activities(room)) {
      if (include_silent) out.insert({room, act, {}});
      for (const auto& cmd : commands) {
        AnnotatedTriple t{room, act, cmd};
        if (!candidates(t).empty()) out.insert(t);
      }
    }
  }
  return {out.begin(), out.end()};
}

void RuleTable::check_against(const SensorManifest& manifest) const {
  for (const auto& r : sensors_) {
    const auto* spec = manifest.find(r.sensor);
    if (!spec) {
      throw Error("rules line " + std::to_string(r.line) + ": unknown sensor " + r.sensor);
    }
    if (r.lo < spec->lo || r.hi > spec->hi) {
      throw Error("rules line " + std::to_string(r.line) + ": constraint outside range of " +
                  r.sensor);
    }
  }
}

Generator::Generator(RuleTable rules, SensorManifest manifest, GeneratorConfig cfg,
                     bool include_silent)
    : rules_(std::move(rules)),
      manifest_(std::move(manifest)),
      cfg_(cfg),
      space_(rules_.valid_triples(include_silent)),
      rng_(cfg.seed) {
  cfg_.validate();
  rules_.check_against(manifest_);
  if (space_.empty()) throw Error("rules admit no annotated state");
}

AnnotatedState Generator::annotate(const AnnotatedTriple& t) {
  AnnotatedState a{t.location, t.activity, t.command, kDoNothing};
  if (t.command.empty()) return a;
  if (cfg_.deterministic) {
    a.expected_action = rules_.first_match(t);
  } else {
    const auto options = rules_.candidates(t);
    if (options.empty()) a.expected_action = rules_.first_match(t);  // throws
    a.expected_action = options[rng_.below(options.size())];
  }
  return a;
}

AnnotatedState Generator::generate_annotated() { return annotate(space_[rng_.below(space_.size())]); }

EnvState Generator::realize_sensors(const AnnotatedState& a) {
  EnvState state;
  state.command = a.command;
  const auto& relevant = rules_.relevant_sensors();
  for (const auto& s : manifest_.sensors()) {
    double v = 0;
    if (s.is_presence()) {
      if (s.room == a.location) {
        v = 1;
      } else if (adjacent(s.room, a.location)) {
        v = rng_.bernoulli(cfg_.adjacency_presence_prob) ? 1 : 0;
      }
    } else if (relevant.count(s.id)) {
      v = s.lo;
    } else if (cfg_.restricted) {
      v = s.default_value();
    } else if (s.kind == SensorKind::binary) {
      v = rng_.bernoulli(0.5) ? 1 : 0;
    } else {
      v = round_reading(rng_.uniform(s.lo, s.hi), s.lo, s.hi);
    }
    state.readings.emplace(s.id, v);
  }
  // Room-wide rules first, then the activity-specific ones override them.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& r : rules_.sensor_rules()) {
      if (r.activity.has_value() != (pass == 1) || !r.matches(a.location, a.activity)) continue;
      const auto* spec = manifest_.find(r.sensor);
      double v = r.lo;
      if (r.hi > r.lo) {
        v = cfg_.restricted ? 0.5 * (r.lo + r.hi) : rng_.uniform(r.lo, r.hi);
        v = round_reading(v, r.lo, r.hi);
      }
      state.readings[spec->id] = v;
    }
  }
  return state;
}

std::vector<Observation> window_samples(const AnnotatedState& a, const EnvState& at_t) {
  std::vector<Observation> out;
  for (int back = 2; back >= 1; --back) {
    Observation o;
    o.state = at_t;
    o.state.command = {};
    o.state.timestamp = at_t.timestamp - back;
    AnnotatedState silent = a;
    silent.command = {};
    silent.expected_action = kDoNothing;
    o.annotation = silent;
    o.expected_action = kDoNothing;
    out.push_back(std::move(o));
  }
  Observation o;
  o.state = at_t;
  o.state.command = a.command;
  o.expected_action = a.expected_action;
  o.annotation = a;
  out.push_back(std::move(o));
  return out;
}

Environment::Environment(RewardConfig reward, int tries_threshold)
    : reward_(reward), threshold_(tries_threshold) {
  reward_.validate();
  if (threshold_ < 1) throw Error("tries_threshold must be >= 1");
}

void Environment::start() {
  current_ = next_observation();
  current_.serial = serial_;
}

StepOutcome Environment::perform_action(int predicted) {
  StepOutcome out;
  out.reward = reward(current_.expected_action, predicted, reward_);
  const auto t = next_try(predicted == current_.expected_action, tries_, threshold_);
  tries_ = t.tries;
  out.advanced = t.advanced;
  if (t.advanced) {
    current_ = next_observation();
    current_.serial = ++serial_;
  }
  return out;
}

SyntheticEnvironment::SyntheticEnvironment(RuleTable rules, SensorManifest manifest,
                                           GeneratorConfig gen, RewardConfig reward,
                                           int tries_threshold)
    : Environment(reward, tries_threshold),
      gen_(std::move(rules), std::move(manifest), gen, reward.mode == RewardMode::plain) {
  start();
}

Observation SyntheticEnvironment::next_observation() {
  if (pending_.empty()) {
    clock_ += kSampleSpacing;
    const auto a = gen_.generate_annotated();
    auto state = gen_.realize_sensors(a);
    state.timestamp = clock_;
    if (reward_config().mode == RewardMode::windowed) {
      for (auto& o : window_samples(a, state)) pending_.push_back(std::move(o));
    } else {
      pending_.push_back(Observation{std::move(state), a.expected_action, a, 0});
    }
  }
  auto o = std::move(pending_.front());
  pending_.pop_front();
  return o;
}

ReplayEnvironment::ReplayEnvironment(std::vector<std::vector<Observation>> groups,
                                     std::uint64_t seed, RewardConfig reward, int tries_threshold)
    : Environment(reward, tries_threshold), groups_(std::move(groups)), rng_(seed) {
  std::erase_if(groups_, [](const auto& g) { return g.empty(); });
  if (groups_.empty()) throw Error("replay environment needs at least one observation");
  order_.resize(groups_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_.begin(), order_.end());
  start();
}

Observation ReplayEnvironment::next_observation() {
  if (item_pos_ == groups_[order_[group_pos_]].size()) {
    item_pos_ = 0;
    if (++group_pos_ == groups_.size()) {
      group_pos_ = 0;
      rng_.shuffle(order_.begin(), order_.end());
    }
  }
  return groups_[order_[group_pos_]][item_pos_++];
}

}  // namespace homedqn
