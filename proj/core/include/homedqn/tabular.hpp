#pragma once

// Classical Q-learning over annotated (location, activity, command) states.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "homedqn/agent.hpp"
#include "homedqn/common.hpp"
#include "homedqn/home_model.hpp"
#include "homedqn/synthetic_world.hpp"

namespace homedqn {

template <class Key, int Actions = kActionCount>
class QTable {
 public:
  using Row = std::array<double, Actions>;

  /// Missing rows read as all zeros.
  const Row& row(const Key& s) const {
    static const Row zeros{};
    auto it = rows_.find(s);
    return it == rows_.end() ? zeros : it->second;
  }
  Row& row_mut(const Key& s) { return rows_.try_emplace(s, Row{}).first->second; }

  double get(const Key& s, int a) const { return row(s)[static_cast<std::size_t>(a)]; }
  double max_value(const Key& s) const {
    const auto& r = row(s);
    double m = r[0];
    for (double v : r) m = std::max(m, v);
    return m;
  }

  /// Q(s,a) <- alpha * (r + gamma * max_a' Q(s',a')) + (1 - alpha) * Q(s,a).
  void q_update(const Key& s, int a, double r, const Key& s_next, double alpha, double gamma) {
    const double target = r + gamma * max_value(s_next);
    auto& q = row_mut(s)[static_cast<std::size_t>(a)];
    q = alpha * target + (1 - alpha) * q;
  }

  /// Lowest index among maxima.
  int greedy(const Key& s) const {
    const auto& r = row(s);
    int best = 0;
    for (int a = 1; a < Actions; ++a) {
      if (r[static_cast<std::size_t>(a)] > r[static_cast<std::size_t>(best)]) best = a;
    }
    return best;
  }

  std::size_t size() const { return rows_.size(); }
  const std::map<Key, Row>& rows() const { return rows_; }

 private:
  std::map<Key, Row> rows_;
};

using TabularTable = QTable<AnnotatedTriple>;

struct TabularConfig {
  double alpha = 0.1;
  double gamma = 0.9;
  EpsilonSchedule epsilon;

  void validate() const;
};

struct TabularRunStats {
  std::int64_t interactions = 0;
  std::int64_t episodes = 0;
  double total_reward = 0;
};

/// Interaction loop over annotations: choose epsilon-greedily on the
/// observation's annotated triple, act, then apply the update with the next
/// observation as successor state.
TabularRunStats train_tabular(TabularTable& table, Environment& env, std::int64_t steps,
                              const TabularConfig& cfg, Rng& rng);

/// Fraction of `steps` greedy decisions that match the expected action.
double tabular_accuracy(const TabularTable& table, Environment& env, std::int64_t steps);

/// `location;activity;verb;object;action_index;q_value` rows.
std::string dump_table(const TabularTable& table);

}  // namespace homedqn
