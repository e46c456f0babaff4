#include "cnrl/selector_training.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <stdexcept>

namespace cnrl {

void SelectorTrainingConfig::validate() const {
  q.validate();
  if (budget <= 0) throw std::invalid_argument("selector training: budget must be positive");
  if (budget < static_cast<long>(q.min_fill)) {
    throw std::invalid_argument("selector training: budget of " + std::to_string(budget) +
                                " transitions is below the replay minimum of " + std::to_string(q.min_fill) +
                                " decisions");
  }
  if (eval_every_episodes <= 0 || eval_episodes <= 0) {
    throw std::invalid_argument("selector training: evaluation cadence must be positive");
  }
  if (step_cap <= 0) throw std::invalid_argument("selector training: step cap must be positive");
}

SelectorTrainingResult train_selector(const ConceptNetwork& net, const ConceptId& selector,
                                      const PolicyBindings& bindings, Environment& env,
                                      const SelectorTrainingConfig& cfg) {
  cfg.validate();
  const ConceptNetwork sub = net.subnetwork(selector);
  if (sub.root().kind != ConceptKind::Selector) {
    throw std::invalid_argument("train_selector: " + selector.str() + " is not a selector");
  }

  PolicyBindings live = bindings;
  for (const auto& id : sub.training_order()) {
    if (id == selector) continue;
    const ConceptNode& node = sub.node(id);
    if (node.kind == ConceptKind::Control) {
      const ControlBinding* b = live.control(id);
      if (!b || !b->policy || !b->trained) {
        throw std::invalid_argument("train_selector: descendant " + id.str() + " is untrained");
      }
    } else {
      const SelectorBinding* b = live.selector(id);
      if (!b || (!b->q && !b->rule)) {
        throw std::invalid_argument("train_selector: descendant " + id.str() + " is untrained");
      }
    }
  }

  const int inputs = static_cast<int>(
      CompiledObservation(sub.observation_spec(sub.root_index()), env.schema()).output_schema()->size());
  const int actions = static_cast<int>(sub.children(sub.root_index()).size());
  auto policy = std::make_shared<QPolicy>(
      QPolicy::network(inputs, cfg.q.hidden, actions, cfg.q.learning_rate, cfg.q.seed));
  QPolicy target = *policy;
  live.bind_selector(selector, policy, cfg.q.gamma);

  ReplayBuffer buffer(cfg.q.replay_capacity, cfg.q.min_fill);
  Rng rng(cfg.q.seed ^ 0xd1b54a32d192ed03ULL);
  std::mt19937_64 seeder(cfg.q.seed ^ 0x94d049bb133111ebULL);

  SelectorTrainingResult result;
  const auto start = std::chrono::steady_clock::now();
  std::shared_ptr<QPolicy> best;

  auto record = [&]() {
    const EvalStats stats = evaluate(sub, live, env, cfg.eval_episodes, cfg.eval_seed, cfg.step_cap);
    result.eval_transitions += stats.transitions;
    CurvePoint p;
    p.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    p.env_transitions = result.env_transitions;
    p.learner_steps = result.learner_steps;
    p.selector_decisions = result.selector_decisions;
    p.mean_eval_return = stats.mean_return;
    p.success_rate = stats.success_rate;
    result.curve.push_back(p);
    // Ties go to the later snapshot.
    if (!best || stats.success_rate >= result.best_success_rate) {
      result.best_success_rate = stats.success_rate;
      best = std::make_shared<QPolicy>(*policy);
    }
  };

  auto on_decision = [&](const SelectorDecision& d) {
    if (d.selector != selector) return;
    Transition t = d.transition;
    t.r *= cfg.q.reward_scale;
    buffer.push(std::move(t));
    ++result.selector_decisions;
    if (!buffer.ready()) return;
    for (int u = 0; u < cfg.q.updates_per_decision; ++u) {
      const auto batch = buffer.sample(static_cast<std::size_t>(cfg.q.batch_size), rng);
      dqn_update(*policy, target, batch, cfg.q);
      ++result.learner_steps;
      if (result.learner_steps % cfg.q.target_sync_interval == 0) sync_target(*policy, target);
    }
  };

  record();
  bool evaluated_last = true;
  while (result.env_transitions < cfg.budget) {
    const std::uint64_t episode_seed = seeder();
    env.reset(episode_seed);
    RunOptions options;
    options.mode = RunMode::Train;
    options.seed = episode_seed;
    options.step_cap = static_cast<int>(std::min<long>(cfg.step_cap, cfg.budget - result.env_transitions));
    options.trainee = selector;
    options.epsilon = [&]() { return cfg.q.epsilon.value(result.selector_decisions); };
    options.on_decision = on_decision;
    const EpisodeTrace trace = run_episode(sub, live, env, options);
    result.env_transitions += trace.total_env_steps;
    ++result.episodes;
    evaluated_last = false;
    if (result.episodes % cfg.eval_every_episodes == 0) {
      record();
      evaluated_last = true;
    }
  }
  if (!evaluated_last) record();

  result.policy = cfg.keep_best ? best : policy;
  return result;
}

}  // namespace cnrl
