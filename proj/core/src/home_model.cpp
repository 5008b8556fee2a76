#include "homedqn/home_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "homedqn/common.hpp"

namespace homedqn {

namespace {

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::array<std::string_view, N>& names,
                std::string_view what) {
  text = trim(text);
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  throw Error("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

constexpr std::array<std::string_view, 4> kRoomNames{"kitchen", "bathroom", "bedroom", "study"};
constexpr std::array<std::string_view, 3> kKindNames{"binary", "continuous", "gauge"};
constexpr std::array<std::string_view, 9> kVerbNames{
    "turn_on",   "turn_off",         "open",           "close",      "give_time",
    "give_temperature", "call_emergency", "call_parent", "none"};
constexpr std::array<std::string_view, 7> kObjectNames{"light",  "radio", "blinds", "curtains",
                                                       "speech", "phone", "none"};
constexpr std::array<std::string_view, 8> kActivityNames{
    "cook", "wash_dishes", "eat", "clean", "nap", "read", "converse", "none"};

// 2x2 plan: kitchen | bedroom over bathroom | study.
constexpr bool kAdjacency[4][4] = {
    // kitchen bathroom bedroom study
    {false, true, true, false},   // kitchen
    {true, false, false, true},   // bathroom
    {true, false, false, true},   // bedroom
    {false, true, true, false},   // study
};

std::vector<Action> build_catalog() {
  std::vector<Action> out;
  auto add = [&](Verb verb, std::string device, std::optional<Room> place) {
    out.push_back(Action{static_cast<int>(out.size()), verb, std::move(device), place});
  };
  for (Verb verb : {Verb::turn_on, Verb::turn_off}) {
    add(verb, "light_all", Room::kitchen);
    add(verb, "light_sink", Room::kitchen);
    add(verb, "light_ceiling", Room::kitchen);
    add(verb, "light_all", Room::bedroom);
    add(verb, "light_bedside", Room::bedroom);
    add(verb, "light_ceiling", Room::bedroom);
    add(verb, "light_ceiling", Room::study);
  }
  add(Verb::turn_on, "radio", Room::bedroom);
  add(Verb::turn_off, "radio", Room::bedroom);
  for (Verb verb : {Verb::open, Verb::close}) {
    add(verb, "blinds", Room::kitchen);
    add(verb, "blinds", Room::bedroom);
    add(verb, "blinds", Room::study);
  }
  add(Verb::open, "curtains", Room::bedroom);
  add(Verb::close, "curtains", Room::bedroom);
  for (Verb verb : {Verb::give_time, Verb::give_temperature}) {
    add(verb, "speakers", Room::kitchen);
    add(verb, "speakers", Room::bedroom);
    add(verb, "speakers", Room::study);
  }
  add(Verb::call_emergency, "phone", Room::study);
  add(Verb::call_parent, "phone", Room::study);
  add(Verb::none, "nothing", std::nullopt);
  return out;
}

}  // namespace

std::string_view to_string(Room room) { return kRoomNames[static_cast<std::size_t>(room)]; }
Room parse_room(std::string_view text) { return parse_enum<Room>(text, kRoomNames, "room"); }

bool adjacent(Room a, Room b) {
  return kAdjacency[static_cast<int>(a)][static_cast<int>(b)];
}

std::vector<Room> neighbours(Room room) {
  std::vector<Room> out;
  for (Room other : kRooms) {
    if (adjacent(room, other)) out.push_back(other);
  }
  return out;
}

std::string_view to_string(SensorKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }
SensorKind parse_sensor_kind(std::string_view text) {
  return parse_enum<SensorKind>(text, kKindNames, "sensor kind");
}

std::string_view to_string(Verb verb) { return kVerbNames[static_cast<std::size_t>(verb)]; }
std::string_view to_string(Object object) {
  return kObjectNames[static_cast<std::size_t>(object)];
}
Verb parse_verb(std::string_view text) { return parse_enum<Verb>(text, kVerbNames, "verb"); }
Object parse_object(std::string_view text) {
  return parse_enum<Object>(text, kObjectNames, "object");
}

std::string to_string(const VoiceCommand& command) {
  return std::string(to_string(command.verb)) + ":" + std::string(to_string(command.object));
}

std::string_view to_string(Activity activity) {
  return kActivityNames[static_cast<std::size_t>(activity)];
}
Activity parse_activity(std::string_view text) {
  return parse_enum<Activity>(text, kActivityNames, "activity");
}

bool SensorSpec::is_presence() const { return id.find("_presence") != std::string::npos; }

double SensorSpec::default_value() const {
  return kind == SensorKind::binary ? 0.0 : 0.5 * (lo + hi);
}

double SensorSpec::normalized(double value) const {
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

SensorManifest::SensorManifest(std::vector<SensorSpec> sensors) : sensors_(std::move(sensors)) {
  std::set<CellPos> slots;
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    const auto& s = sensors_[i];
    if (s.id.empty()) throw Error("sensor with empty id");
    if (!(s.lo < s.hi)) throw Error("sensor " + s.id + ": range lower bound must be < upper");
    if (s.kind == SensorKind::binary && (s.lo != 0 || s.hi != 1)) {
      throw Error("sensor " + s.id + ": binary sensors take range 0..1");
    }
    if (!index_.emplace(s.id, i).second) throw Error("duplicate sensor id " + s.id);
    if (!slots.insert(s.slot).second) {
      throw Error("sensor " + s.id + ": icon slot (" + std::to_string(s.slot.x) + "," +
                  std::to_string(s.slot.y) + ") already used");
    }
  }
}

SensorManifest SensorManifest::parse(std::istream& in, std::string_view origin) {
  std::vector<SensorSpec> sensors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = split(text, ';');
    const auto where = std::string(origin) + ":" + std::to_string(line_no);
    if (fields.size() != 7) throw Error(where + ": expected 7 fields, got " +
                                        std::to_string(fields.size()));
    try {
      SensorSpec s;
      s.id = std::string(trim(fields[0]));
      s.room = parse_room(fields[1]);
      s.kind = parse_sensor_kind(fields[2]);
      s.lo = parse_double(fields[3], "lo");
      s.hi = parse_double(fields[4], "hi");
      s.slot = {static_cast<int>(parse_int(fields[5], "cell_x")),
                static_cast<int>(parse_int(fields[6], "cell_y"))};
      sensors.push_back(std::move(s));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return SensorManifest(std::move(sensors));
}

SensorManifest SensorManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sensor manifest " + path.string());
  return parse(in, path.string());
}

const SensorSpec* SensorManifest::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &sensors_[it->second];
}

std::optional<std::size_t> SensorManifest::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string SensorManifest::to_text() const {
  std::ostringstream out;
  for (const auto& s : sensors_) {
    out << s.id << ';' << to_string(s.room) << ';' << to_string(s.kind) << ';'
        << format_double(s.lo) << ';' << format_double(s.hi) << ';' << s.slot.x << ';'
        << s.slot.y << '\n';
  }
  return out.str();
}

std::string Action::label() const {
  return std::string(to_string(verb)) + " " + device + " " +
         std::string(place ? to_string(*place) : "nowhere");
}

const std::vector<Action>& action_catalog() {
  static const std::vector<Action> catalog = build_catalog();
  return catalog;
}

const Action& action_by_index(int index) {
  if (index < 0 || index >= kActionCount) {
    throw Error("action index " + std::to_string(index) + " outside [0, 32]");
  }
  return action_catalog()[static_cast<std::size_t>(index)];
}

std::optional<int> find_action(Verb verb, std::string_view device, std::optional<Room> place) {
  for (const auto& a : action_catalog()) {
    if (a.verb == verb && a.device == device && a.place == place) return a.index;
  }
  return std::nullopt;
}

std::string catalog_csv() {
  std::ostringstream out;
  for (const auto& a : action_catalog()) {
    out << a.index << ';' << to_string(a.verb) << ';' << a.device << ';'
        << (a.place ? to_string(*a.place) : std::string_view("nowhere")) << '\n';
  }
  return out.str();
}

std::vector<Violation> validate_state(const EnvState& state, const SensorManifest& profile) {
  std::vector<Violation> out;
  for (const auto& s : profile.sensors()) {
    auto it = state.readings.find(s.id);
    if (it == state.readings.end()) {
      out.push_back({Violation::Kind::missing, s.id, "no reading for sensor " + s.id});
      continue;
    }
    const double v = it->second;
    if (!std::isfinite(v)) {
      out.push_back({Violation::Kind::non_finite, s.id, "non-finite reading for " + s.id});
    } else if (s.kind == SensorKind::binary) {
      if (v != 0.0 && v != 1.0) {
        out.push_back({Violation::Kind::not_binary, s.id,
                       "binary sensor " + s.id + " reads " + format_double(v)});
      }
    } else if (v < s.lo || v > s.hi) {
      out.push_back({Violation::Kind::out_of_range, s.id,
                     "sensor " + s.id + " reads " + format_double(v) + " outside [" +
                         format_double(s.lo) + ", " + format_double(s.hi) + "]"});
    }
  }
  return out;
}

std::string format_state(const EnvState& state) {
  std::ostringstream out;
  out << "timestamp;" << state.timestamp << '\n';
  out << "command;" << to_string(state.command.verb) << ';' << to_string(state.command.object)
      << '\n';
  for (const auto& [id, value] : state.readings) out << id << ';' << format_double(value) << '\n';
  return out.str();
}

EnvState parse_state(std::string_view text) {
  EnvState state;
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, ';');
    const auto where = "state line " + std::to_string(line_no);
    try {
      if (fields[0] == "timestamp" && fields.size() == 2) {
        state.timestamp = parse_int(fields[1], "timestamp");
      } else if (fields[0] == "command" && fields.size() == 3) {
        state.command = {parse_verb(fields[1]), parse_object(fields[2])};
      } else if (fields.size() == 2) {
        state.readings[std::string(trim(fields[0]))] = parse_double(fields[1], fields[0]);
      } else {
        throw Error("malformed record");
      }
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return state;
}

}  // namespace homedqn
