#pragma once

// Live sessions in which a human supplies the rewards. Transport independent:
// every inbound JSON message yields the ordered list of replies.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "homedqn/agent.hpp"
#include "homedqn/harness.hpp"

namespace homedqn {

inline constexpr int kProtocolVersion = 1;

struct PendingDecision {
  EnvState state;
  ImagePtr image;
  int action = kDoNothing;
};

struct FeedbackStats {
  std::int64_t decisions = 0;
  std::int64_t positive = 0;
  std::int64_t episodes = 0;
  double episode_reward = 0;  // summed over completed episodes
  double open_episode_reward = 0;
};

class LiveSession {
 public:
  LiveSession(std::string id, const World& world, std::unique_ptr<DqnAgent> agent,
              const PhaseConfig& cfg, std::uint64_t seed);

  const std::string& id() const { return id_; }
  std::int64_t step() const { return step_; }
  int tries() const { return tries_; }
  const EnvState& state() const { return state_; }
  const std::optional<PendingDecision>& pending() const { return pending_; }
  const DqnAgent& agent() const { return *agent_; }
  const FeedbackStats& stats() const { return stats_; }

  /// Throws Error when a decision is pending or an override is invalid.
  nlohmann::json post_command(VoiceCommand command, const nlohmann::json& overrides);
  /// Throws Error when nothing is pending or `value` is not +1 or -1. Returns
  /// the ack; the metrics and the next state follow from the accessors.
  nlohmann::json post_reward(int value);

  nlohmann::json state_message() const;
  nlohmann::json decision_message() const;
  nlohmann::json metrics_message() const;

 private:
  void next_sample();
  nlohmann::json envelope(std::string_view type) const;

  std::string id_;
  const World& world_;
  std::unique_ptr<DqnAgent> agent_;
  Generator gen_;
  SensorMask mask_;
  int tries_threshold_;
  EnvState state_;
  int tries_ = 0;
  std::int64_t step_ = 0;
  std::optional<PendingDecision> pending_;
  QValues last_q_{};
  FeedbackStats stats_;
};

/// Per-connection binding to a session.
struct LiveConnection {
  std::string session;
};

class LiveService {
 public:
  explicit LiveService(PhaseConfig cfg);

  /// One inbound message; protocol errors become `error` replies.
  std::vector<nlohmann::json> handle(LiveConnection& conn, const nlohmann::json& msg);
  std::vector<std::string> handle_text(LiveConnection& conn, std::string_view text);

  LiveSession* find(std::string_view id);
  std::size_t session_count() const { return sessions_.size(); }

 private:
  std::vector<nlohmann::json> hello(LiveConnection& conn, const nlohmann::json& msg);
  LiveSession& bound(const LiveConnection& conn);
  const World& world(const std::string& profile);

  PhaseConfig cfg_;
  std::map<std::string, std::unique_ptr<World>> worlds_;
  std::map<std::string, std::unique_ptr<LiveSession>, std::less<>> sessions_;
  std::uint64_t next_id_ = 1;
};

nlohmann::json error_message(std::string_view message, std::string_view session = {});
std::string base64_encode(std::string_view bytes);

}  // namespace homedqn
