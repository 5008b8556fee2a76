#pragma once

// Recorded corpus on disk: one directory per participant holding
// `<sensor_id>.csv` (`timestamp;value`), `command.csv` (`timestamp;verb;object`)
// and `action.csv` (`timestamp;index`). Timestamps are integer seconds from
// session start; files are semicolon-separated without header.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "homedqn/home_model.hpp"
#include "homedqn/synthetic_world.hpp"

namespace homedqn {

struct SensorEvent {
  std::int64_t timestamp = 0;
  double value = 0;
};

struct SensorEventStream {
  std::string sensor_id;
  std::vector<SensorEvent> events;
};

struct CommandEvent {
  std::int64_t timestamp = 0;
  VoiceCommand command;
};

struct ActionEvent {
  std::int64_t timestamp = 0;
  int action = kDoNothing;
};

struct ParticipantStreams {
  std::string participant;
  std::vector<SensorEventStream> sensors;  // manifest order
  std::vector<CommandEvent> commands;
  std::vector<ActionEvent> actions;
};

/// Participants are the sub-directories of `root` in name order; a root with
/// no sub-directory is read as a single participant. Missing annotation files
/// are fatal, missing sensor files give empty streams.
std::vector<ParticipantStreams> load_corpus(const std::filesystem::path& root,
                                            const SensorManifest& manifest);

struct AlignedSample {
  std::string participant;
  std::vector<Observation> window;  // t-2, t-1, t
};

inline constexpr std::int64_t kActionMatchTolerance = 2;

/// Sample-and-hold readings around every command; commands without an action
/// annotation within the tolerance are dropped.
std::vector<AlignedSample> align(const ParticipantStreams& streams, const SensorManifest& manifest);

struct Fold {
  std::string held_out;
  std::vector<AlignedSample> adaptation;
  std::vector<AlignedSample> test;
};

/// One fold per participant, in order of first appearance.
std::vector<Fold> losocv_folds(const std::vector<AlignedSample>& samples);

/// Converts samples to the grouped observations a ReplayEnvironment serves.
std::vector<std::vector<Observation>> as_groups(const std::vector<AlignedSample>& samples);

struct RecordedSample {
  AnnotatedState annotation;
  EnvState state;  // timestamp = command time
};

/// Writes one participant directory. Readings are emitted two seconds before
/// each command and only when they change, so that aligning the written files
/// reproduces every window exactly. Samples must be at least 3 s apart.
void write_participant(const std::filesystem::path& dir, const std::vector<RecordedSample>& samples,
                       const SensorManifest& manifest);

/// Draws `samples_per_participant` command samples per participant from the
/// deterministic generator and writes them under `root/p01`, `root/p02`, ...
void write_synthetic_corpus(const std::filesystem::path& root, int participants,
                            int samples_per_participant, const RuleTable& rules,
                            const SensorManifest& manifest, std::uint64_t seed);

}  // namespace homedqn
