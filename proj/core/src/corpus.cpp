#include "homedqn/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace homedqn {

namespace fs = std::filesystem;

namespace {

struct CsvRow {
  int line = 0;
  std::vector<std::string_view> fields;
};

/// Fields view into `text`, which must outlive the rows.
std::vector<CsvRow> read_rows(const std::string& text, const fs::path& path, std::size_t arity) {
  std::vector<CsvRow> rows;
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split(line, ';');
    if (fields.size() != arity) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(arity) + " fields");
    }
    rows.push_back({line_no, std::move(fields)});
  }
  return rows;
}

template <class Fn>
auto at_line(const fs::path& path, int line, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

void check_order(const fs::path& path, int line, std::int64_t prev, std::int64_t t) {
  if (t < prev) {
    throw Error(path.string() + ":" + std::to_string(line) + ": timestamp " + std::to_string(t) +
                " precedes " + std::to_string(prev));
  }
}

ParticipantStreams load_participant(const fs::path& dir, std::string name,
                                    const SensorManifest& manifest) {
  const auto command_path = dir / "command.csv";
  const auto action_path = dir / "action.csv";
  std::vector<std::string> missing;
  if (!fs::is_regular_file(command_path)) missing.push_back(command_path.string());
  if (!fs::is_regular_file(action_path)) missing.push_back(action_path.string());
  if (!missing.empty()) {
    std::string msg = "corpus participant '" + name + "' lacks annotation file(s): ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
    throw Error(msg);
  }

  ParticipantStreams out;
  out.participant = std::move(name);

  for (const auto& spec : manifest.sensors()) {
    SensorEventStream stream{spec.id, {}};
    const auto path = dir / (spec.id + ".csv");
    if (!fs::is_regular_file(path)) {
      spdlog::warn("corpus participant '{}': no stream for sensor {}, using default value",
                   out.participant, spec.id);
      out.sensors.push_back(std::move(stream));
      continue;
    }
    std::int64_t prev = INT64_MIN;
    const auto text = read_file(path);
    for (const auto& row : read_rows(text, path, 2)) {
      SensorEvent ev = at_line(path, row.line, [&] {
        return SensorEvent{parse_int(row.fields[0], "timestamp"),
                           parse_double(row.fields[1], "value")};
      });
      check_order(path, row.line, prev, ev.timestamp);
      prev = ev.timestamp;
      const bool ok = spec.kind == SensorKind::binary
                          ? (ev.value == 0.0 || ev.value == 1.0)
                          : (std::isfinite(ev.value) && ev.value >= spec.lo && ev.value <= spec.hi);
      if (!ok) {
        throw Error(path.string() + ":" + std::to_string(row.line) + ": value " +
                    format_double(ev.value) + " outside the range of " + spec.id);
      }
      stream.events.push_back(ev);
    }
    out.sensors.push_back(std::move(stream));
  }

  std::int64_t prev = INT64_MIN;
  const auto command_text = read_file(command_path);
  for (const auto& row : read_rows(command_text, command_path, 3)) {
    CommandEvent ev = at_line(command_path, row.line, [&] {
      return CommandEvent{parse_int(row.fields[0], "timestamp"),
                          {parse_verb(row.fields[1]), parse_object(row.fields[2])}};
    });
    check_order(command_path, row.line, prev, ev.timestamp);
    prev = ev.timestamp;
    out.commands.push_back(ev);
  }
  prev = INT64_MIN;
  const auto action_text = read_file(action_path);
  for (const auto& row : read_rows(action_text, action_path, 2)) {
    ActionEvent ev = at_line(action_path, row.line, [&] {
      const auto index = parse_int(row.fields[1], "action index");
      action_by_index(static_cast<int>(index));
      return ActionEvent{parse_int(row.fields[0], "timestamp"), static_cast<int>(index)};
    });
    check_order(action_path, row.line, prev, ev.timestamp);
    prev = ev.timestamp;
    out.actions.push_back(ev);
  }
  return out;
}

double reading_at(const SensorEventStream& stream, const SensorSpec& spec, std::int64_t t) {
  auto it = std::upper_bound(stream.events.begin(), stream.events.end(), t,
                             [](std::int64_t v, const SensorEvent& e) { return v < e.timestamp; });
  if (it == stream.events.begin()) return spec.default_value();
  return std::prev(it)->value;
}

}  // namespace

std::vector<ParticipantStreams> load_corpus(const fs::path& root, const SensorManifest& manifest) {
  if (!fs::is_directory(root)) throw Error("corpus directory " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<ParticipantStreams> out;
  if (dirs.empty()) {
    out.push_back(load_participant(root, root.filename().string(), manifest));
    return out;
  }
  for (const auto& d : dirs) out.push_back(load_participant(d, d.filename().string(), manifest));
  return out;
}

std::vector<AlignedSample> align(const ParticipantStreams& streams, const SensorManifest& manifest) {
  if (streams.sensors.size() != manifest.size()) {
    throw Error("align: streams do not match the sensor manifest");
  }
  std::vector<AlignedSample> out;
  std::vector<bool> used(streams.actions.size(), false);
  for (const auto& cmd : streams.commands) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < streams.actions.size(); ++i) {
      const auto d = std::llabs(streams.actions[i].timestamp - cmd.timestamp);
      if (used[i] || d > kActionMatchTolerance) continue;
      if (!best || d < std::llabs(streams.actions[*best].timestamp - cmd.timestamp)) best = i;
    }
    if (!best) {
      spdlog::warn("corpus participant '{}': command {} at t={} has no action annotation; dropped",
                   streams.participant, to_string(cmd.command), cmd.timestamp);
      continue;
    }
    used[*best] = true;
    EnvState at_t;
    at_t.timestamp = cmd.timestamp;
    at_t.command = cmd.command;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const auto& spec = manifest.sensors()[i];
      at_t.readings.emplace(spec.id, reading_at(streams.sensors[i], spec, cmd.timestamp));
    }
    AlignedSample sample{streams.participant, {}};
    for (int back = 2; back >= 0; --back) {
      Observation o;
      o.state.timestamp = cmd.timestamp - back;
      for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& spec = manifest.sensors()[i];
        o.state.readings.emplace(spec.id, reading_at(streams.sensors[i], spec, o.state.timestamp));
      }
      if (back == 0) {
        o.state.command = cmd.command;
        o.expected_action = streams.actions[*best].action;
      }
      sample.window.push_back(std::move(o));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<Fold> losocv_folds(const std::vector<AlignedSample>& samples) {
  std::vector<std::string> participants;
  for (const auto& s : samples) {
    if (std::find(participants.begin(), participants.end(), s.participant) == participants.end()) {
      participants.push_back(s.participant);
    }
  }
  if (participants.size() < 2) {
    throw Error("leave-one-subject-out needs at least 2 participants, got " +
                std::to_string(participants.size()));
  }
  std::vector<Fold> folds;
  for (const auto& p : participants) {
    Fold f{p, {}, {}};
    for (const auto& s : samples) (s.participant == p ? f.test : f.adaptation).push_back(s);
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<std::vector<Observation>> as_groups(const std::vector<AlignedSample>& samples) {
  std::vector<std::vector<Observation>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.window);
  return out;
}

void write_participant(const fs::path& dir, const std::vector<RecordedSample>& samples,
                       const SensorManifest& manifest) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].state.timestamp - samples[i - 1].state.timestamp <= 2) {
      throw Error("write_participant: samples must be at least 3 s apart");
    }
  }
  fs::create_directories(dir);
  for (const auto& spec : manifest.sensors()) {
    std::ostringstream csv;
    std::optional<double> last;
    for (const auto& s : samples) {
      auto it = s.state.readings.find(spec.id);
      if (it == s.state.readings.end()) throw Error("write_participant: no reading for " + spec.id);
      if (last && *last == it->second) continue;
      csv << s.state.timestamp - 2 << ';' << format_double(it->second) << '\n';
      last = it->second;
    }
    write_file(dir / (spec.id + ".csv"), csv.str());
  }
  std::ostringstream commands;
  std::ostringstream actions;
  for (const auto& s : samples) {
    commands << s.state.timestamp << ';' << to_string(s.state.command.verb) << ';'
             << to_string(s.state.command.object) << '\n';
    actions << s.state.timestamp << ';' << s.annotation.expected_action << '\n';
  }
  write_file(dir / "command.csv", commands.str());
  write_file(dir / "action.csv", actions.str());
}

void write_synthetic_corpus(const fs::path& root, int participants, int samples_per_participant,
                            const RuleTable& rules, const SensorManifest& manifest,
                            std::uint64_t seed) {
  if (participants < 1 || samples_per_participant < 1) {
    throw Error("synthetic corpus needs at least one participant and one sample");
  }
  for (int p = 0; p < participants; ++p) {
    GeneratorConfig cfg;
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(p));
    Generator gen(rules, manifest, cfg, false);
    std::vector<RecordedSample> samples;
    for (int k = 0; k < samples_per_participant; ++k) {
      RecordedSample s;
      s.annotation = gen.generate_annotated();
      s.state = gen.realize_sensors(s.annotation);
      s.state.timestamp = 10 + 10 * static_cast<std::int64_t>(k);
      samples.push_back(std::move(s));
    }
    char name[16];
    std::snprintf(name, sizeof name, "p%02d", p + 1);
    write_participant(root / name, samples, manifest);
  }
}

}  // namespace homedqn
