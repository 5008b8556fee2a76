#include "homedqn/tabular.hpp"

#include <sstream>

namespace homedqn {

namespace {

AnnotatedTriple key_of(const Observation& o) {
  if (!o.annotation) throw Error("tabular learning needs annotated observations");
  return o.annotation->triple();
}

}  // namespace

void TabularConfig::validate() const {
  if (!(alpha > 0 && alpha <= 1)) throw Error("alpha must lie in (0, 1]");
  if (!(gamma >= 0 && gamma < 1)) throw Error("gamma must lie in [0, 1)");
}

TabularRunStats train_tabular(TabularTable& table, Environment& env, std::int64_t steps,
                              const TabularConfig& cfg, Rng& rng) {
  cfg.validate();
  TabularRunStats stats;
  for (std::int64_t step = 0; step < steps; ++step) {
    const AnnotatedTriple s = key_of(env.observe());
    const double eps = cfg.epsilon.at(step);
    const int a = rng.uniform() < eps ? static_cast<int>(rng.below(kActionCount)) : table.greedy(s);
    const auto out = env.perform_action(a);
    const AnnotatedTriple s_next = key_of(env.observe());
    table.q_update(s, a, out.reward, s_next, cfg.alpha, cfg.gamma);
    ++stats.interactions;
    stats.total_reward += out.reward;
    if (out.advanced) ++stats.episodes;
  }
  return stats;
}

double tabular_accuracy(const TabularTable& table, Environment& env, std::int64_t steps) {
  if (steps < 1) throw Error("accuracy needs at least one step");
  std::int64_t correct = 0;
  for (std::int64_t step = 0; step < steps; ++step) {
    const auto& o = env.observe();
    const int a = table.greedy(key_of(o));
    if (a == o.expected_action) ++correct;
    env.perform_action(a);
  }
  return static_cast<double>(correct) / static_cast<double>(steps);
}

std::string dump_table(const TabularTable& table) {
  std::ostringstream out;
  for (const auto& [key, row] : table.rows()) {
    for (int a = 0; a < kActionCount; ++a) {
      out << to_string(key.location) << ';' << to_string(key.activity) << ';'
          << to_string(key.command.verb) << ';' << to_string(key.command.object) << ';' << a << ';'
          << format_double(row[static_cast<std::size_t>(a)]) << '\n';
    }
  }
  return out.str();
}

}  // namespace homedqn
