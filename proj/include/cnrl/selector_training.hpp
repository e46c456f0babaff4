#pragma once

// Semi-MDP DQN training of one selector with its descendants frozen. Each
// selector decision becomes one replay transition covering the child's span.

#include "cnrl/evaluation.hpp"
#include "cnrl/execution.hpp"
#include "cnrl/learners.hpp"

#include <memory>
#include <vector>

namespace cnrl {

struct SelectorTrainingConfig {
  QLearnerConfig q;
  long budget = 50'000;  // training env transitions
  int eval_every_episodes = 50;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1'000'000;
  int step_cap = kGlobalStepCap;
  bool keep_best = true;

  void validate() const;
};

struct SelectorTrainingResult {
  std::shared_ptr<QPolicy> policy;  // best evaluated snapshot, or the final policy
  std::vector<CurvePoint> curve;
  long env_transitions = 0;     // training
  long eval_transitions = 0;
  long selector_decisions = 0;  // decisions of the trained selector
  long learner_steps = 0;
  int episodes = 0;
  double best_success_rate = 0.0;
};

/// Trains `selector` inside `net` (the selector's sub-network is executed)
/// with every other node bound in `bindings`. Throws std::invalid_argument
/// for a budget that cannot reach the replay minimum, or for an unbound or
/// untrained descendant.
SelectorTrainingResult train_selector(const ConceptNetwork& net, const ConceptId& selector,
                                      const PolicyBindings& bindings, Environment& env,
                                      const SelectorTrainingConfig& cfg);

}  // namespace cnrl
