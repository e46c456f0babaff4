#pragma once

// Cross-entropy method over a diagonal Gaussian, and its use as the trainer
// for control concepts with a small tanh policy network.

#include "cnrl/approximator.hpp"
#include "cnrl/evaluation.hpp"
#include "cnrl/execution.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace cnrl {

struct CemConfig {
  int population = 64;
  double elite_fraction = 0.125;
  double noise_floor = 1e-3;  // added to the refitted variance
  int iterations = 30;
  int episodes_per_candidate = 1;
  double init_stddev = 1.0;
  std::uint64_t seed = 0;

  /// ceil(population * elite_fraction)
  int elite_count() const;
  /// Throws std::invalid_argument unless 1 <= elite_count < population and
  /// the remaining fields are in range.
  void validate() const;
};

/// Indices of the `count` highest scores, best first; ties go to the lower index.
std::vector<int> select_elites(const std::vector<double>& scores, int count);

struct CemIteration {
  int iteration = 0;
  double mean_score = 0.0;
  double best_score = 0.0;
  double elite_mean_score = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

struct CemResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::vector<CemIteration> history;
  long evaluations = 0;
};

/// Score of one candidate. Every candidate of an iteration receives the same
/// iteration index, so stochastic objectives can share their random numbers.
using CemObjective = std::function<double(const Eigen::VectorXd& params, int iteration)>;

/// Called after each iteration; returning false stops the search.
using CemObserver = std::function<bool(const CemIteration&)>;

/// Runs up to cfg.iterations iterations, stopping early when the next one
/// would exceed `max_evaluations` objective calls (0 means unlimited).
/// Throws std::invalid_argument when not even one iteration fits.
CemResult cem_optimize(const CemObjective& objective, const Eigen::VectorXd& init_mean, const CemConfig& cfg,
                       long max_evaluations = 0, const CemObserver& observer = {});

/// Deterministic policy: output_i = bound_i * tanh(net(obs)_i).
class MlpControlPolicy : public ControlPolicy {
 public:
  MlpControlPolicy(Mlpd net, std::vector<double> bounds);

  Eigen::VectorXd act(const Observation& obs) override;
  const Mlpd& net() const { return net_; }
  const std::vector<double>& bounds() const { return bounds_; }

 private:
  Mlpd net_;
  std::vector<double> bounds_;
};

struct CemTrainingConfig {
  CemConfig cem;
  int hidden = 32;
  std::vector<double> output_bounds;  // one per learned action component
  long budget = 0;                    // training env transitions
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1'000'000;
  int episode_cap = kSubConceptStepCap;
};

struct CemTrainingResult {
  Mlpd net;
  std::vector<double> output_bounds;
  CemResult search;
  std::vector<CurvePoint> curve;
  long env_transitions = 0;
  long eval_transitions = 0;
  double final_success_rate = 0.0;
};

/// Trains the control concept `concept_id` of `net` on its own reward in
/// `env`, which must already be configured for that concept's task. Throws
/// std::invalid_argument when the budget cannot cover one full iteration
/// (population x episodes x episode_cap transitions).
CemTrainingResult train_cem(const ConceptNetwork& net, const ConceptId& concept_id, Environment& env,
                            const CemTrainingConfig& cfg);

}  // namespace cnrl
