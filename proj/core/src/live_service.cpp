#include "homedqn/live_service.hpp"

#include <boost/beast/core/detail/base64.hpp>

namespace homedqn {

using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

json error_message(std::string_view message, std::string_view session) {
  json j{{"type", "error"}, {"proto", kProtocolVersion}, {"message", message}};
  if (!session.empty()) j["session"] = session;
  return j;
}

namespace {

json command_json(const VoiceCommand& c) {
  if (c.empty()) return nullptr;
  return {{"verb", to_string(c.verb)}, {"object", to_string(c.object)}};
}

}  // namespace

LiveSession::LiveSession(std::string id, const World& world, std::unique_ptr<DqnAgent> agent,
                         const PhaseConfig& cfg, std::uint64_t seed)
    : id_(std::move(id)),
      world_(world),
      agent_(std::move(agent)),
      gen_(world.rules, world.renderer.manifest(),
           [&] {
             auto g = cfg.generator;
             g.seed = seed;
             return g;
           }(),
           false),
      mask_(cfg.mask),
      tries_threshold_(cfg.tries_threshold) {
  next_sample();
}

void LiveSession::next_sample() {
  state_ = gen_.realize_sensors(gen_.generate_annotated());
  state_.command = {};
  state_.timestamp = step_;
  tries_ = 0;
}

json LiveSession::envelope(std::string_view type) const {
  return {{"type", type}, {"proto", kProtocolVersion}, {"session", id_}, {"step", step_}};
}

json LiveSession::state_message() const {
  const EnvState& shown = pending_ ? pending_->state : state_;
  auto j = envelope("state");
  j["image"] = base64_encode(export_pgm(world_.renderer.render(shown, mask_)));
  j["side"] = world_.renderer.profile().image_side;
  j["tries"] = tries_;
  j["command"] = command_json(shown.command);
  j["pending"] = pending_.has_value();
  return j;
}

json LiveSession::decision_message() const {
  if (!pending_) throw Error("no pending decision");
  auto j = envelope("decision");
  j["action_index"] = pending_->action;
  j["label"] = action_by_index(pending_->action).label();
  j["q_values"] = last_q_;
  j["command"] = command_json(pending_->state.command);
  return j;
}

json LiveSession::metrics_message() const {
  auto j = envelope("metrics");
  j["decisions"] = stats_.decisions;
  j["positive_rate"] =
      stats_.decisions == 0 ? 0.0 : static_cast<double>(stats_.positive) / static_cast<double>(stats_.decisions);
  j["episodes"] = stats_.episodes;
  j["avg_reward_per_episode"] =
      stats_.episodes == 0 ? 0.0 : stats_.episode_reward / static_cast<double>(stats_.episodes);
  j["interactions"] = agent_->interactions();
  j["learn_calls"] = agent_->learn_stats().calls;
  j["pool_size"] = agent_->pool().size();
  return j;
}

json LiveSession::post_command(VoiceCommand command, const json& overrides) {
  if (pending_) throw Error("reward required before the next command");
  if (command.empty()) throw Error("command needs a verb and an object");
  EnvState next = state_;
  if (!overrides.is_null()) {
    if (!overrides.is_object()) throw Error("overrides must map sensor ids to numbers");
    for (const auto& [id, value] : overrides.items()) {
      if (!world_.renderer.manifest().find(id)) throw Error("unknown sensor '" + id + "'");
      if (!value.is_number()) throw Error("override for '" + id + "' is not a number");
      next.readings[id] = value.get<double>();
    }
    for (const auto& v : validate_state(next, world_.renderer.manifest())) {
      throw Error(v.message);
    }
  }
  state_ = next;
  PendingDecision p;
  p.state = state_;
  p.state.command = command;
  p.image = std::make_shared<const StateImage>(world_.renderer.render(p.state, mask_));
  last_q_ = agent_->q_values(*p.image);
  p.action = argmax(last_q_);
  pending_ = std::move(p);
  ++stats_.decisions;
  return decision_message();
}

json LiveSession::post_reward(int value) {
  if (!pending_) throw Error("no pending decision");
  if (value != 1 && value != -1) throw Error("reward must be +1 or -1");
  const bool matched = value > 0;
  const auto outcome = next_try(matched, tries_, tries_threshold_);
  if (matched) ++stats_.positive;
  stats_.open_episode_reward += value;
  ++step_;
  EnvState successor;
  if (outcome.advanced) {
    ++stats_.episodes;
    stats_.episode_reward += stats_.open_episode_reward;
    stats_.open_episode_reward = 0;
    next_sample();
    successor = state_;
  } else {
    tries_ = outcome.tries;
    successor = pending_->state;
  }
  Transition t;
  t.state = pending_->image;
  t.action = pending_->action;
  t.reward = value;
  t.next_state = std::make_shared<const StateImage>(world_.renderer.render(successor, mask_));
  pending_.reset();
  const bool learned = agent_->integrate(std::move(t));
  auto j = envelope("ack");
  j["reward"] = value;
  j["advanced"] = outcome.advanced;
  j["learned"] = learned;
  j["pool_size"] = agent_->pool().size();
  j["learn_calls"] = agent_->learn_stats().calls;
  return j;
}

LiveService::LiveService(PhaseConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

const World& LiveService::world(const std::string& profile) {
  auto it = worlds_.find(profile);
  if (it == worlds_.end()) {
    it = worlds_.emplace(profile, std::make_unique<World>(World::load(profile, cfg_.data_dir))).first;
  }
  return *it->second;
}

LiveSession* LiveService::find(std::string_view id) {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

LiveSession& LiveService::bound(const LiveConnection& conn) {
  auto* s = find(conn.session);
  if (!s) throw Error("send hello first");
  return *s;
}

std::vector<json> LiveService::hello(LiveConnection& conn, const json& msg) {
  LiveSession* session = nullptr;
  bool resumed = false;
  if (msg.contains("session")) {
    session = find(msg.at("session").get<std::string>());
    if (!session) throw Error("unknown session '" + msg.at("session").get<std::string>() + "'");
    resumed = true;
  } else {
    auto cfg = cfg_;
    if (msg.contains("profile")) cfg.render = msg.at("profile").get<std::string>();
    if (msg.contains("checkpoint")) cfg.checkpoint = msg.at("checkpoint").get<std::string>();
    const std::uint64_t n = next_id_;
    cfg.seed = msg.contains("seed") ? msg.at("seed").get<std::uint64_t>() : cfg_.seed + n;
    const World& w = world(cfg.render);
    auto agent = cfg.checkpoint.empty() ? make_agent(cfg) : load_agent(cfg, cfg.checkpoint);
    auto id = "session-" + std::to_string(n);
    auto s = std::make_unique<LiveSession>(id, w, std::move(agent), cfg, cfg.seed);
    ++next_id_;
    session = sessions_.emplace(id, std::move(s)).first->second.get();
  }
  conn.session = session->id();
  json h{{"type", "hello"},      {"proto", kProtocolVersion}, {"session", session->id()},
         {"resumed", resumed},   {"step", session->step()}};
  json actions = json::array();
  for (const auto& a : action_catalog()) actions.push_back(a.label());
  h["actions"] = std::move(actions);
  std::vector<json> out{std::move(h), session->state_message()};
  if (session->pending()) out.push_back(session->decision_message());
  return out;
}

std::vector<json> LiveService::handle(LiveConnection& conn, const json& msg) {
  try {
    if (!msg.is_object() || !msg.contains("type")) throw Error("message needs a type");
    if (msg.contains("proto") && msg.at("proto") != kProtocolVersion) {
      throw Error("unsupported protocol version");
    }
    const auto type = msg.at("type").get<std::string>();
    if (type == "hello") return hello(conn, msg);
    auto& s = bound(conn);
    if (type == "command") {
      const VoiceCommand c{parse_verb(msg.at("verb").get<std::string>()),
                           parse_object(msg.at("object").get<std::string>())};
      const json overrides = msg.contains("overrides") ? msg.at("overrides") : json();
      auto decision = s.post_command(c, overrides);
      return {s.state_message(), std::move(decision)};
    }
    if (type == "reward") {
      const auto& v = msg.at("value");
      if (!v.is_number_integer()) throw Error("reward must be +1 or -1");
      auto ack = s.post_reward(v.get<int>());
      return {std::move(ack), s.metrics_message(), s.state_message()};
    }
    if (type == "metrics") return {s.metrics_message()};
    if (type == "state") return {s.state_message()};
    throw Error("unknown message type '" + type + "'");
  } catch (const json::exception& e) {
    return {error_message(std::string("malformed message: ") + e.what(), conn.session)};
  } catch (const std::exception& e) {
    return {error_message(e.what(), conn.session)};
  }
}

std::vector<std::string> LiveService::handle_text(LiveConnection& conn, std::string_view text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception& e) {
    return {error_message(std::string("invalid JSON: ") + e.what(), conn.session).dump()};
  }
  std::vector<std::string> out;
  for (const auto& r : handle(conn, msg)) out.push_back(r.dump());
  return out;
}

}  // namespace homedqn
