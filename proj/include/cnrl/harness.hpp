#pragma once

// Experiment orchestration for the grasp-and-stack benchmark: configuration,
// leaf-first training with freezing, evaluation, checkpoints, and the
// flat / nested / monolithic comparison.

#include "cnrl/cem.hpp"
#include "cnrl/concept_graph.hpp"
#include "cnrl/env/grasp_stack.hpp"
#include "cnrl/evaluation.hpp"
#include "cnrl/execution.hpp"
#include "cnrl/selector_training.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnrl {

/// How one concept gets its policy.
struct ConceptPlan {
  std::string learner;  // "scripted", "dqn", "cem", "checkpoint"
  long budget = 0;      // training env transitions
  std::optional<Task> task;  // defaults to the concept's own sub-task
  double target_success = 0.0;  // final success below this aborts the run
  QLearnerConfig q;
  CemConfig cem;
  int hidden = 32;
  std::vector<double> output_bounds;
  std::string checkpoint;
};

struct EvalCadence {
  int every_episodes = 50;
  int episodes = 10;
  std::uint64_t seed = 1'000'000;
  int final_episodes = 500;
};

struct ExperimentConfig {
  std::string topology;  // path, resolved against the config file's directory
  std::string base_dir;  // directory relative paths are resolved against
  Task task = Task::Full;
  std::uint64_t seed = 0;
  std::string output_dir;
  GraspStackConfig env;
  EvalCadence eval;
  std::map<std::string, ConceptPlan> concepts;

  /// Throws std::invalid_argument for non-positive cadence values and invalid environment parameters.
  void validate() const;
};

/// Parses a JSON experiment config. Unknown top-level keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);
/// Canonical JSON echo of a config (every field, defaults included).
std::string experiment_config_json(const ExperimentConfig& cfg);

struct ConceptRecord {
  std::string id;
  std::string learner;
  std::vector<CurvePoint> curve;
  long env_transitions = 0;  // training
  long eval_transitions = 0;
  long selector_decisions = 0;
  long learner_steps = 0;
  double final_success_rate = 0.0;
  std::string checkpoint;
};

struct RunRecord {
  std::vector<ConceptRecord> concepts;
  long train_transitions = 0;
  long eval_transitions = 0;
  long env_transitions = 0;  // training plus evaluation
  long selector_decisions = 0;
  std::optional<EvalStats> final_eval;
  std::vector<std::string> checkpoints;
  std::string config_echo;
  bool complete = false;
};

/// A network with every node bound to a usable policy.
struct TrainedSystem {
  ConceptNetwork net;
  PolicyBindings bindings;
};

struct TrainOutcome {
  RunRecord record;
  TrainedSystem system;
};

/// Thrown when a concept misses its target success within its budget; carries
/// the record up to and including that concept.
class BudgetExhausted : public std::runtime_error {
 public:
  BudgetExhausted(const std::string& what, RunRecord partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

ConceptNetwork load_config_network(const ExperimentConfig& cfg);

/// Trains every concept children-first, freezing each before its parents
/// train, then evaluates the whole network on cfg.eval.final_episodes
/// episodes. Writes curves, checkpoints and run metadata when output_dir is set.
TrainOutcome train_all(const ExperimentConfig& cfg);

/// Trains a single concept with its descendants bound as configured (scripted
/// or from checkpoints). Returns its record and writes its outputs.
ConceptRecord train_concept(const ExperimentConfig& cfg, const std::string& concept_id);

/// Binds every node from scripts or checkpoints (for evaluation after training).
/// Throws std::invalid_argument if some node has neither.
TrainedSystem load_system(const ExperimentConfig& cfg);

/// Greedy evaluation of the full task.
EvalStats evaluate_system(const TrainedSystem& system, const GraspStackConfig& env_cfg, Task task, int episodes,
                          std::uint64_t seed);

/// Selector learner defaults for the benchmark: the stock DQN settings with
/// eight gradient steps per decision.
QLearnerConfig benchmark_q_config();

struct CompareConfig {
  GraspStackConfig env;
  std::uint64_t seed = 0;
  long hierarchy_budget = 50'000;
  long grasp_budget = 10'000;
  long monolith_budget = 500'000;
  double monolith_speed = 0.2;
  /// One-step decisions, so this matches the hierarchies' gradient steps per env transition.
  int monolith_updates_per_decision = 1;
  QLearnerConfig q = benchmark_q_config();
  EvalCadence eval;
  std::string output_dir;
};

struct ArmReport {
  std::string name;
  long budget = 0;
  long train_transitions = 0;   // including any nested selector pre-training
  long pretrain_transitions = 0;
  long t50 = -1;                // training transitions to 50% success, -1 if never
  long t95 = -1;
  double final_success_rate = 0.0;
  double best_success_rate = 0.0;
  std::map<std::string, long> decisions;  // per trained selector
  std::vector<CurvePoint> curve;
};

struct ComparisonReport {
  std::vector<ArmReport> arms;  // flat, tree, monolith (those with a positive budget)
  /// Monolith transitions-to-50% over a hierarchy's transitions-to-95%. A
  /// monolith that never reaches 50% counts as its full budget, and the
  /// ratio is then a lower bound.
  std::optional<double> speedup_flat;
  std::optional<double> speedup_tree;
  bool monolith_censored = false;
};

ComparisonReport compare_hierarchies(const CompareConfig& cfg);
std::string comparison_csv(const ComparisonReport& report);
std::string comparison_summary(const ComparisonReport& report);

/// One row per primitive step: step, concept, features before the step,
/// action, root reward, noop and terminal flags.
std::string trace_csv(const EpisodeTrace& trace, const FeatureSchema& schema);

/// Replays the actions of a trace CSV from `seed` and returns the largest
/// absolute difference between recorded and re-simulated features.
double replay_trace_csv(const std::string& csv, const GraspStackConfig& env_cfg, Task task, std::uint64_t seed);

/// Deterministic per-concept seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& tag);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace cnrl
