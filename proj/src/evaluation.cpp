#include "cnrl/evaluation.hpp"

#include <cstdio>
#include <stdexcept>

namespace cnrl {

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "wall_clock_s,env_transitions,learner_steps,selector_decisions,mean_eval_return,success_rate\n";
  char line[256];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%.3f,%ld,%ld,%ld,%.17g,%.17g\n", p.wall_clock_s, p.env_transitions,
                  p.learner_steps, p.selector_decisions, p.mean_eval_return, p.success_rate);
    out += line;
  }
  return out;
}

EvalStats evaluate(const ConceptNetwork& net, const PolicyBindings& policies, Environment& env, int episodes,
                   std::uint64_t seed, int step_cap) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episode count must be positive");
  EvalStats stats;
  stats.episodes = episodes;
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    env.reset(seed + static_cast<std::uint64_t>(i));
    RunOptions options;
    options.mode = RunMode::Eval;
    options.seed = seed + static_cast<std::uint64_t>(i);
    options.step_cap = step_cap;
    const EpisodeTrace trace = run_episode(net, policies, env, options);
    total += trace.total_reward();
    stats.transitions += trace.total_env_steps;
    stats.successes += trace.success ? 1 : 0;
    for (const auto& [id, n] : trace.selector_decisions) stats.selector_decisions += n;
  }
  stats.mean_return = total / episodes;
  stats.success_rate = static_cast<double>(stats.successes) / episodes;
  return stats;
}

long transitions_to_threshold(const std::vector<CurvePoint>& curve, double threshold) {
  for (const auto& p : curve) {
    if (p.success_rate >= threshold) return p.env_transitions;
  }
  return -1;
}

}  // namespace cnrl
