#include "homedqn/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace homedqn {

double EpsilonSchedule::at(std::int64_t step, Phase phase) const {
  if (phase == Phase::eval) return 0.0;
  if (step <= 0) return start;
  if (step >= anneal_steps) return end;
  const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return start + (end - start) * frac;
}

void AgentConfig::validate() const {
  if (!(gamma >= 0 && gamma < 1)) throw Error("gamma must lie in [0, 1)");
  const auto in_unit = [](double v) { return v >= 0 && v <= 1; };
  if (!in_unit(epsilon.start) || !in_unit(epsilon.end)) throw Error("epsilon must lie in [0, 1]");
  if (epsilon.anneal_steps < 1) throw Error("epsilon_anneal_steps must be >= 1");
  if (minibatch_size < 1 || update_freq < 1 || target_q < 1) {
    throw Error("minibatch_size, update_freq and target_q must be >= 1");
  }
  if (replay_capacity < 1) throw Error("replay_capacity must be >= 1");
  if (!(td_clip >= 0)) throw Error("td_clip must be >= 0");
}

ReplayPool::ReplayPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error("replay pool capacity must be positive");
}

void ReplayPool::push(Transition t) {
  if (t.action < 0 || t.action >= kActionCount) throw Error("transition action out of range");
  if (!t.state || !t.next_state) throw Error("transition without state image");
  ++total_pushed_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayPool::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw Error("cannot sample from an empty replay pool");
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &items_[rng.below(items_.size())];
  return out;
}

const Transition& ReplayPool::at(std::size_t i) const {
  if (i >= items_.size()) throw Error("replay pool index out of range");
  return items_[(head_ + i) % items_.size()];
}

int argmax(const QValues& q) {
  int best = 0;
  for (int a = 1; a < kActionCount; ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

std::string_view to_string(FeatureTap tap) {
  return tap == FeatureTap::post_conv ? "post_conv" : "pre_output";
}

FeatureTap parse_feature_tap(std::string_view text) {
  text = trim(text);
  if (text == "post_conv") return FeatureTap::post_conv;
  if (text == "pre_output") return FeatureTap::pre_output;
  throw Error("unknown feature tap '" + std::string(text) + "'");
}

DqnAgent::DqnAgent(const NetworkSpec& spec, AgentConfig cfg, std::uint64_t seed)
    : DqnAgent(
          [&] {
            Network<float> net(spec);
            net.init_glorot(seed);
            return net;
          }(),
          cfg, seed) {}

DqnAgent::DqnAgent(Network<float> online, AgentConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      online_(std::move(online)),
      target_(online_),
      rms_(online_, cfg.rms),
      grads_(online_.make_gradients()),
      pool_(cfg.replay_capacity),
      rng_(mix_seed(seed, 0xA6E47)) {
  cfg_.validate();
  if (online_.output_size() != static_cast<std::size_t>(kActionCount)) {
    throw Error("Q-network must output " + std::to_string(kActionCount) + " values");
  }
  if (online_.layers().front().in_ch != 1) throw Error("Q-network must take one image channel");
}

void DqnAgent::to_input(const StateImage& s, float* dst) const {
  if (s.side != online_.input_side()) {
    throw Error("state image is " + std::to_string(s.side) + " px, network expects " +
                std::to_string(online_.input_side()));
  }
  for (std::size_t i = 0; i < s.pixels.size(); ++i) dst[i] = static_cast<float>(s.pixels[i]) / 255.0f;
}

QValues DqnAgent::q_values(const StateImage& s) {
  batch_in_.resize(online_.input_size());
  to_input(s, batch_in_.data());
  const auto out = online_.forward(batch_in_, 1);
  QValues q;
  std::copy(out.begin(), out.end(), q.begin());
  return q;
}

QValues DqnAgent::target_q_values(const StateImage& s) {
  batch_in_.resize(target_.input_size());
  to_input(s, batch_in_.data());
  const auto out = target_.forward(batch_in_, 1);
  QValues q;
  std::copy(out.begin(), out.end(), q.begin());
  return q;
}

int DqnAgent::get_action(const StateImage& s, double epsilon) {
  if (!(epsilon >= 0 && epsilon <= 1)) throw Error("epsilon must lie in [0, 1]");
  if (rng_.uniform() < epsilon) return static_cast<int>(rng_.below(kActionCount));
  return greedy(s);
}

bool DqnAgent::integrate(Transition t) {
  pool_.push(std::move(t));
  ++interactions_;
  bool learned = false;
  if (interactions_ % static_cast<std::uint64_t>(cfg_.update_freq) == 0) {
    learn();
    learned = true;
  }
  if (interactions_ % static_cast<std::uint64_t>(cfg_.target_q) == 0) sync_target();
  return learned;
}

void DqnAgent::learn() {
  const auto start = std::chrono::steady_clock::now();
  const int B = cfg_.minibatch_size;
  const auto batch = pool_.sample(static_cast<std::size_t>(B), rng_);
  const std::size_t in_sz = online_.input_size();
  batch_in_.resize(in_sz * B);

  for (int b = 0; b < B; ++b) to_input(*batch[b]->next_state, batch_in_.data() + in_sz * b);
  const auto next_q = target_.forward(batch_in_, B);
  std::vector<float> targets(B);
  for (int b = 0; b < B; ++b) {
    const float* row = next_q.data() + static_cast<std::size_t>(b) * kActionCount;
    const float best = *std::max_element(row, row + kActionCount);
    targets[b] = static_cast<float>(batch[b]->reward) + static_cast<float>(cfg_.gamma) * best;
    if (!std::isfinite(targets[b])) throw Error("non-finite learning target");
  }

  for (int b = 0; b < B; ++b) to_input(*batch[b]->state, batch_in_.data() + in_sz * b);
  const auto q = online_.forward(batch_in_, B);
  d_out_.assign(static_cast<std::size_t>(B) * kActionCount, 0.0f);
  for (int b = 0; b < B; ++b) {
    const auto idx = static_cast<std::size_t>(b) * kActionCount + batch[b]->action;
    float err = targets[b] - q[idx];
    if (cfg_.td_clip > 0) {
      const auto c = static_cast<float>(cfg_.td_clip);
      err = std::clamp(err, -c, c);
    }
    d_out_[idx] = err;
  }
  grads_.zero();
  online_.backward(d_out_, grads_);
  rms_.step(online_, grads_);

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ++stats_.calls;
  stats_.total_ms += ms;
  stats_.last_ms = ms;
}

void DqnAgent::sync_target() {
  for (std::size_t i = 0; i < online_.layers().size(); ++i) {
    target_.layers()[i].weights = online_.layers()[i].weights;
    target_.layers()[i].biases = online_.layers()[i].biases;
  }
}

std::vector<float> DqnAgent::extract_features(const StateImage& s, FeatureTap tap) {
  q_values(s);
  const auto layer =
      tap == FeatureTap::post_conv ? online_.last_conv_layer() : online_.penultimate_layer();
  const auto a = online_.activation(layer);
  return {a.begin(), a.end()};
}

void DqnAgent::save_checkpoint(const std::filesystem::path& path) const {
  save_weights(online_, path);
  std::ostringstream meta;
  meta << "interactions=" << interactions_ << '\n'
       << "learn_calls=" << stats_.calls << '\n'
       << "pool_size=" << pool_.size() << '\n'
       << "pool_total_pushed=" << pool_.total_pushed() << '\n';
  auto meta_path = path;
  meta_path += ".meta";
  write_file(meta_path, meta.str());
}

DqnAgent DqnAgent::load_checkpoint(const std::filesystem::path& path, AgentConfig cfg,
                                   std::uint64_t seed, std::optional<int> input_side) {
  auto net = load_weights(path);
  if (input_side && net.input_side() != *input_side) {
    throw Error("checkpoint " + path.string() + " takes " + std::to_string(net.input_side()) +
                " px images, the render profile produces " + std::to_string(*input_side));
  }
  DqnAgent agent(std::move(net), cfg, seed);
  auto meta_path = path;
  meta_path += ".meta";
  if (std::filesystem::exists(meta_path)) {
    const auto text = read_file(meta_path);
    for (auto line : split(text, '\n')) {
      line = trim(line);
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      if (line.substr(0, eq) == "interactions") {
        agent.interactions_ =
            static_cast<std::uint64_t>(parse_int(line.substr(eq + 1), "interactions"));
      }
    }
  }
  return agent;
}

}  // namespace homedqn
