#pragma once

// Vocabulary of the smart home: rooms, sensors, voice commands, the fixed
// 33-entry action catalog and the observable environment state.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace homedqn {

enum class Room : std::uint8_t { kitchen, bathroom, bedroom, study };

inline constexpr std::array<Room, 4> kRooms{Room::kitchen, Room::bathroom, Room::bedroom,
                                            Room::study};

std::string_view to_string(Room room);
Room parse_room(std::string_view text);

/// Rooms sharing a wall in the reference floor plan. Symmetric, irreflexive.
bool adjacent(Room a, Room b);
std::vector<Room> neighbours(Room room);

enum class SensorKind : std::uint8_t { binary, continuous, gauge };

std::string_view to_string(SensorKind kind);
SensorKind parse_sensor_kind(std::string_view text);

struct CellPos {
  int x = 0;
  int y = 0;
  auto operator<=>(const CellPos&) const = default;
};

struct SensorSpec {
  std::string id;
  Room room = Room::kitchen;
  SensorKind kind = SensorKind::binary;
  double lo = 0;
  double hi = 1;
  CellPos slot;

  /// Motion/presence detectors are recognised by their id (`<room>_presence_<n>`).
  bool is_presence() const;
  /// Value used for a sensor that never reported: 0 for binary, midpoint otherwise.
  double default_value() const;
  /// Maps a reading onto [0, 1] (clamped).
  double normalized(double value) const;
};

class SensorManifest {
 public:
  SensorManifest() = default;
  /// Throws Error on duplicate ids, duplicate slots or empty ranges.
  explicit SensorManifest(std::vector<SensorSpec> sensors);

  /// Parses `id;room;kind;lo;hi;cell_x;cell_y` records. '#' starts a comment.
  static SensorManifest parse(std::istream& in, std::string_view origin = "manifest");
  static SensorManifest load(const std::filesystem::path& path);

  const std::vector<SensorSpec>& sensors() const { return sensors_; }
  std::size_t size() const { return sensors_.size(); }
  bool empty() const { return sensors_.empty(); }
  const SensorSpec* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  std::string to_text() const;

 private:
  std::vector<SensorSpec> sensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

enum class Verb : std::uint8_t {
  turn_on,
  turn_off,
  open,
  close,
  give_time,
  give_temperature,
  call_emergency,
  call_parent,
  none
};

enum class Object : std::uint8_t { light, radio, blinds, curtains, speech, phone, none };

inline constexpr std::array<Verb, 8> kVerbs{Verb::turn_on,        Verb::turn_off,  Verb::open,
                                            Verb::close,          Verb::give_time,
                                            Verb::give_temperature, Verb::call_emergency,
                                            Verb::call_parent};
inline constexpr std::array<Object, 6> kObjects{Object::light,    Object::radio,
                                                Object::blinds,   Object::curtains,
                                                Object::speech,   Object::phone};

std::string_view to_string(Verb verb);
std::string_view to_string(Object object);
Verb parse_verb(std::string_view text);
Object parse_object(std::string_view text);

struct VoiceCommand {
  Verb verb = Verb::none;
  Object object = Object::none;

  bool empty() const { return verb == Verb::none && object == Object::none; }
  auto operator<=>(const VoiceCommand&) const = default;
};

std::string to_string(const VoiceCommand& command);

enum class Activity : std::uint8_t { cook, wash_dishes, eat, clean, nap, read, converse, none };

inline constexpr std::array<Activity, 8> kActivities{
    Activity::cook, Activity::wash_dishes, Activity::eat,      Activity::clean,
    Activity::nap,  Activity::read,        Activity::converse, Activity::none};

std::string_view to_string(Activity activity);
Activity parse_activity(std::string_view text);

inline constexpr int kActionCount = 33;
inline constexpr int kDoNothing = 32;

struct Action {
  int index = kDoNothing;
  Verb verb = Verb::none;
  std::string device;
  std::optional<Room> place;  // nullopt = nowhere

  std::string label() const;
  bool operator==(const Action&) const = default;
};

/// Catalog in table row order, devices left to right; index 32 is do-nothing.
const std::vector<Action>& action_catalog();
/// Throws Error outside [0, 32].
const Action& action_by_index(int index);
std::optional<int> find_action(Verb verb, std::string_view device, std::optional<Room> place);
/// `index;verb;device;place` lines, no header.
std::string catalog_csv();

struct EnvState {
  std::map<std::string, double, std::less<>> readings;
  VoiceCommand command;
  std::int64_t timestamp = 0;

  bool operator==(const EnvState&) const = default;
};

struct Violation {
  enum class Kind { missing, out_of_range, not_binary, non_finite };
  Kind kind;
  std::string sensor_id;
  std::string message;
};

/// Empty result means the state is valid for `profile`.
std::vector<Violation> validate_state(const EnvState& state, const SensorManifest& profile);

/// Line format: `timestamp;<t>`, `command;<verb>;<object>`, then `<id>;<value>`.
std::string format_state(const EnvState& state);
EnvState parse_state(std::string_view text);

struct AnnotatedTriple {
  Room location = Room::kitchen;
  Activity activity = Activity::none;
  VoiceCommand command;

  auto operator<=>(const AnnotatedTriple&) const = default;
};

struct AnnotatedState {
  Room location = Room::kitchen;
  Activity activity = Activity::none;
  VoiceCommand command;
  int expected_action = kDoNothing;

  AnnotatedTriple triple() const { return {location, activity, command}; }
};

}  // namespace homedqn
