#pragma once

// Greedy evaluation over a fixed seed set, and the learning-curve record
// shared by the selector and control-concept trainers.

#include "cnrl/execution.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cnrl {

struct CurvePoint {
  double wall_clock_s = 0.0;
  long env_transitions = 0;   // training transitions so far
  long learner_steps = 0;
  long selector_decisions = 0;
  double mean_eval_return = 0.0;
  double success_rate = 0.0;
};

/// CSV with header wall_clock_s,env_transitions,learner_steps,selector_decisions,mean_eval_return,success_rate.
std::string curve_csv(const std::vector<CurvePoint>& curve);

struct EvalStats {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;  // undiscounted root reward per episode
  long transitions = 0;
  long selector_decisions = 0;
};

/// Runs `episodes` eval-mode episodes, resetting env with seeds seed, seed+1, ...
/// Throws std::invalid_argument when episodes <= 0.
EvalStats evaluate(const ConceptNetwork& net, const PolicyBindings& policies, Environment& env, int episodes,
                   std::uint64_t seed, int step_cap = kGlobalStepCap);

/// First curve point whose success rate reaches `threshold`, as training transitions; -1 if none.
long transitions_to_threshold(const std::vector<CurvePoint>& curve, double threshold);

}  // namespace cnrl
