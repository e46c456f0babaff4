#include "cnrl/cem.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cnrl {

int CemConfig::elite_count() const {
  return static_cast<int>(std::ceil(population * elite_fraction - 1e-12));
}

void CemConfig::validate() const {
  if (population < 1) throw std::invalid_argument("cem: population must be positive");
  if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) {
    throw std::invalid_argument("cem: elite_fraction must lie in (0, 1)");
  }
  const int elites = elite_count();
  if (elites < 1 || elites >= population) {
    throw std::invalid_argument("cem: elite set must be non-empty and smaller than the population");
  }
  if (!(noise_floor >= 0.0)) throw std::invalid_argument("cem: noise_floor must be non-negative");
  if (iterations < 1) throw std::invalid_argument("cem: iterations must be positive");
  if (episodes_per_candidate < 1) throw std::invalid_argument("cem: episodes_per_candidate must be positive");
  if (!(init_stddev > 0.0)) throw std::invalid_argument("cem: init_stddev must be positive");
}

std::vector<int> select_elites(const std::vector<double>& scores, int count) {
  if (count < 0 || count > static_cast<int>(scores.size())) {
    throw std::invalid_argument("select_elites: count out of range");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  order.resize(static_cast<std::size_t>(count));
  return order;
}

CemResult cem_optimize(const CemObjective& objective, const Eigen::VectorXd& init_mean, const CemConfig& cfg,
                       long max_evaluations, const CemObserver& observer) {
  cfg.validate();
  if (max_evaluations > 0 && max_evaluations < cfg.population) {
    throw std::invalid_argument("cem: evaluation budget smaller than one iteration");
  }
  const Eigen::Index n = init_mean.size();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  CemResult result;
  result.mean = init_mean;
  result.variance = Eigen::VectorXd::Constant(n, cfg.init_stddev * cfg.init_stddev);
  const int elites = cfg.elite_count();

  Eigen::MatrixXd samples(n, cfg.population);
  std::vector<double> scores(static_cast<std::size_t>(cfg.population));
  for (int it = 0; it < cfg.iterations; ++it) {
    if (max_evaluations > 0 && result.evaluations + cfg.population > max_evaluations) break;
    const Eigen::VectorXd stddev = result.variance.cwiseSqrt();
    for (int c = 0; c < cfg.population; ++c) {
      for (Eigen::Index k = 0; k < n; ++k) samples(k, c) = result.mean[k] + stddev[k] * normal(rng);
    }
    for (int c = 0; c < cfg.population; ++c) {
      scores[static_cast<std::size_t>(c)] = objective(samples.col(c), it);
    }
    result.evaluations += cfg.population;

    const std::vector<int> elite = select_elites(scores, elites);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (int e : elite) mean += samples.col(e);
    mean /= elites;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
    for (int e : elite) var += (samples.col(e) - mean).cwiseAbs2();
    var /= elites;
    result.mean = mean;
    result.variance = var.array() + cfg.noise_floor;

    CemIteration rec;
    rec.iteration = it;
    rec.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / cfg.population;
    rec.best_score = scores[static_cast<std::size_t>(elite.front())];
    double elite_sum = 0.0;
    for (int e : elite) elite_sum += scores[static_cast<std::size_t>(e)];
    rec.elite_mean_score = elite_sum / elites;
    rec.mean = result.mean;
    rec.variance = result.variance;
    result.history.push_back(rec);
    if (observer && !observer(rec)) break;
  }
  return result;
}

MlpControlPolicy::MlpControlPolicy(Mlpd net, std::vector<double> bounds)
    : net_(std::move(net)), bounds_(std::move(bounds)) {
  if (static_cast<int>(bounds_.size()) != net_.output_size()) {
    throw std::invalid_argument("MlpControlPolicy: one output bound per network output required");
  }
}

Eigen::VectorXd MlpControlPolicy::act(const Observation& obs) {
  const Eigen::VectorXd raw = forward(net_, obs.values);
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) out[i] = bounds_[static_cast<std::size_t>(i)] * std::tanh(raw[i]);
  return out;
}

CemTrainingResult train_cem(const ConceptNetwork& net, const ConceptId& concept_id, Environment& env,
                            const CemTrainingConfig& cfg) {
  cfg.cem.validate();
  const std::size_t idx = net.index_of(concept_id);
  const ConceptNode& node = net.node(idx);
  if (node.kind != ConceptKind::Control) throw std::invalid_argument("train_cem: " + concept_id.str() + " is not a control concept");
  if (node.reward.empty()) throw std::invalid_argument("train_cem: " + concept_id.str() + " has no reward function");
  if (cfg.episode_cap <= 0) throw std::invalid_argument("train_cem: episode cap must be positive");
  const long per_iteration =
      static_cast<long>(cfg.cem.population) * cfg.cem.episodes_per_candidate * cfg.episode_cap;
  if (cfg.budget < per_iteration) {
    throw std::invalid_argument("train_cem: budget of " + std::to_string(cfg.budget) +
                                " transitions cannot cover one iteration (" + std::to_string(per_iteration) + ")");
  }

  const ConceptNetwork sub = net.subnetwork(concept_id);
  const int inputs = static_cast<int>(CompiledObservation(sub.observation_spec(sub.root_index()), env.schema())
                                          .output_schema()
                                          ->size());
  const int outputs = node.action_map.is_identity() ? static_cast<int>(env.action_size())
                                                    : node.action_map.partial_size();
  if (static_cast<int>(cfg.output_bounds.size()) != outputs) {
    throw std::invalid_argument("train_cem: expected " + std::to_string(outputs) + " output bounds");
  }

  const Mlpd shape({inputs, cfg.hidden, outputs});
  Mlpd work = shape;

  CemTrainingResult result;
  result.output_bounds = cfg.output_bounds;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 seeder(cfg.cem.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::uint64_t> iteration_seeds;

  auto run = [&](const Eigen::VectorXd& params, std::uint64_t seed, long& counter) {
    work.set_params(params);
    PolicyBindings b;
    b.bind_control(concept_id, std::make_shared<MlpControlPolicy>(work, cfg.output_bounds));
    env.reset(seed);
    RunOptions options;
    options.mode = RunMode::Train;
    options.seed = seed;
    options.step_cap = cfg.episode_cap;
    options.max_root_activations = 1;
    const EpisodeTrace trace = run_episode(sub, b, env, options);
    counter += trace.total_env_steps;
    return trace.total_reward();
  };

  auto objective = [&](const Eigen::VectorXd& params, int iteration) {
    while (static_cast<int>(iteration_seeds.size()) <= iteration) iteration_seeds.push_back(seeder());
    double total = 0.0;
    for (int e = 0; e < cfg.cem.episodes_per_candidate; ++e) {
      total += run(params, iteration_seeds[static_cast<std::size_t>(iteration)] + static_cast<std::uint64_t>(e),
                   result.env_transitions);
    }
    return total / cfg.cem.episodes_per_candidate;
  };

  auto eval_mean = [&](const Eigen::VectorXd& params) {
    work.set_params(params);
    PolicyBindings b;
    b.bind_control(concept_id, std::make_shared<MlpControlPolicy>(work, cfg.output_bounds));
    return evaluate(sub, b, env, cfg.eval_episodes, cfg.eval_seed, cfg.episode_cap);
  };

  long learner_steps = 0;
  auto observer = [&](const CemIteration& rec) {
    ++learner_steps;
    const EvalStats stats = eval_mean(rec.mean);
    result.eval_transitions += stats.transitions;
    CurvePoint p;
    p.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    p.env_transitions = result.env_transitions;
    p.learner_steps = learner_steps;
    p.mean_eval_return = stats.mean_return;
    p.success_rate = stats.success_rate;
    result.curve.push_back(p);
    return result.env_transitions + per_iteration <= cfg.budget;
  };

  Mlpd init = shape;
  init.initialize(cfg.cem.seed);
  result.search = cem_optimize(objective, init.params(), cfg.cem, 0, observer);
  result.net = shape;
  result.net.set_params(result.search.mean);
  result.final_success_rate = result.curve.empty() ? 0.0 : result.curve.back().success_rate;
  return result;
}

}  // namespace cnrl
