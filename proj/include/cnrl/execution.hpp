#pragma once

// Episode execution over a concept network. Selectors pick a child, the child
// runs until one of its terminal conditions fires, and control returns to the
// root, which descends again until the episode ends.

#include "cnrl/concept_graph.hpp"
#include "cnrl/learners.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cnrl {

class Environment {
 public:
  virtual ~Environment() = default;

  virtual void reset(std::uint64_t seed) = 0;
  virtual SchemaPtr schema() const = 0;
  virtual Features features() const = 0;
  virtual Eigen::Index action_size() const = 0;
  /// Throws std::domain_error on a non-finite action.
  virtual void step(const Eigen::VectorXd& action) = 0;
  /// Reward of the transition just taken under the named reward function;
  /// `local_step` is the 0-based step index within the caller's activation.
  virtual double reward(std::string_view reward_id, int local_step) const = 0;
  virtual bool task_success() const = 0;
};

class ControlPolicy {
 public:
  virtual ~ControlPolicy() = default;
  virtual void begin_activation() {}
  /// Partial action, before the concept's action map.
  virtual Eigen::VectorXd act(const Observation& obs) = 0;
};

struct ControlBinding {
  std::shared_ptr<ControlPolicy> policy;
  bool trained = true;
};

/// A selector driven either by a Q-function or by a fixed rule over its observation.
struct SelectorBinding {
  std::shared_ptr<const QPolicy> q;
  double gamma = 0.98;
  std::function<int(const Observation&)> rule;
};

/// Runtime policies for the nodes of one network. The network itself stays immutable.
class PolicyBindings {
 public:
  void bind_control(const ConceptId& id, std::shared_ptr<ControlPolicy> policy, bool trained = true);
  void bind_selector(const ConceptId& id, std::shared_ptr<const QPolicy> q, double gamma);
  void bind_selector_rule(const ConceptId& id, std::function<int(const Observation&)> rule, double gamma);

  const ControlBinding* control(const ConceptId& id) const;
  const SelectorBinding* selector(const ConceptId& id) const;

  /// Throws std::invalid_argument naming the first node of `net` without a usable binding.
  void require_complete(const ConceptNetwork& net) const;

 private:
  std::map<ConceptId, ControlBinding> controls_;
  std::map<ConceptId, SelectorBinding> selectors_;
};

enum class RunMode { Train, Eval };

struct Span {
  ConceptId concept_id;
  int parent = -1;  // index into EpisodeTrace::spans
  int start_step = 0;
  int end_step = 0;  // exclusive
  double cumulative_reward = 0.0;
  TerminationKind termination = TerminationKind::EpisodeEnd;
  bool noop = false;
};

struct StepRecord {
  Transition transition;  // raw features before/after, full action, root reward
  ConceptId concept_id;   // the control concept that acted
  bool noop = false;
};

struct SelectorDecision {
  ConceptId selector;
  int child = -1;
  int start_step = 0;
  int span = -1;          // span index of the chosen child
  Transition transition;  // selector observations, child index, discounted span reward
};

struct EpisodeTrace {
  std::vector<Span> spans;
  std::vector<StepRecord> steps;
  std::vector<SelectorDecision> decisions;
  std::map<ConceptId, int> selector_decisions;
  int total_env_steps = 0;
  bool success = false;

  double total_reward() const;
};

struct RunOptions {
  RunMode mode = RunMode::Eval;
  std::uint64_t seed = 0;
  int step_cap = kGlobalStepCap;
  int max_root_activations = 0;  // 0 = until the episode ends
  /// In train mode this selector explores with epsilon().
  std::optional<ConceptId> trainee;
  std::function<double()> epsilon;
  std::function<void(const SelectorDecision&)> on_decision;
};

/// Runs one episode from the environment's current state (the caller resets it).
EpisodeTrace run_episode(const ConceptNetwork& net, const PolicyBindings& policies, Environment& env,
                         const RunOptions& options);

}  // namespace cnrl
