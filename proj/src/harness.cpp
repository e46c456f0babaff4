#include "cnrl/harness.hpp"

#include "cnrl/env/benchmark.hpp"
#include "cnrl/env/scripted.hpp"
#include "cnrl/topology_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cnrl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

void read_vec2(const json& j, const char* key, Eigen::Vector2d& v) {
  if (!j.contains(key)) return;
  const auto a = j.at(key).get<std::vector<double>>();
  if (a.size() != 2) throw std::invalid_argument(std::string(key) + " needs two values");
  v = {a[0], a[1]};
}

void read_vec3(const json& j, const char* key, Eigen::Vector3d& v) {
  if (!j.contains(key)) return;
  const auto a = j.at(key).get<std::vector<double>>();
  if (a.size() != 3) throw std::invalid_argument(std::string(key) + " needs three values");
  v = {a[0], a[1], a[2]};
}

json rewards_to_json(const RewardParams& p) {
  return {{"alpha_angle", p.alpha_angle}, {"alpha_height", p.alpha_height}, {"alpha_pinch", p.alpha_pinch},
          {"d_max", p.d_max},             {"p_max", p.p_max},               {"h_max", p.h_max},
          {"t_max", p.t_max},             {"w_theta", p.w_theta},           {"w_d", p.w_d},
          {"w_p", p.w_p},                 {"w_h", p.w_h},                   {"b_orient", p.b_orient},
          {"b_lift", p.b_lift},           {"b_stack", p.b_stack},           {"w_stage1", p.w_stage1},
          {"w_grasp", p.w_grasp},         {"w_stage2", p.w_stage2},         {"w_stack", p.w_stack},
          {"eps_d", p.eps_d},             {"eps_theta", p.eps_theta},       {"eps_h", p.eps_h},
          {"eps_p", p.eps_p}};
}

RewardParams rewards_from_json(const json& j) {
  RewardParams p;
  reject_unknown(j, {"alpha_angle", "alpha_height", "alpha_pinch", "d_max", "p_max", "h_max", "t_max", "w_theta",
                     "w_d", "w_p", "w_h", "b_orient", "b_lift", "b_stack", "w_stage1", "w_grasp", "w_stage2",
                     "w_stack", "eps_d", "eps_theta", "eps_h", "eps_p"},
                 "rewards");
  read_opt(j, "alpha_angle", p.alpha_angle);
  read_opt(j, "alpha_height", p.alpha_height);
  read_opt(j, "alpha_pinch", p.alpha_pinch);
  read_opt(j, "d_max", p.d_max);
  read_opt(j, "p_max", p.p_max);
  read_opt(j, "h_max", p.h_max);
  read_opt(j, "t_max", p.t_max);
  read_opt(j, "w_theta", p.w_theta);
  read_opt(j, "w_d", p.w_d);
  read_opt(j, "w_p", p.w_p);
  read_opt(j, "w_h", p.w_h);
  // Bonuses follow the weights unless given explicitly.
  p = with_default_bonuses(p);
  read_opt(j, "b_orient", p.b_orient);
  read_opt(j, "b_lift", p.b_lift);
  read_opt(j, "b_stack", p.b_stack);
  read_opt(j, "w_stage1", p.w_stage1);
  read_opt(j, "w_grasp", p.w_grasp);
  read_opt(j, "w_stage2", p.w_stage2);
  read_opt(j, "w_stack", p.w_stack);
  read_opt(j, "eps_d", p.eps_d);
  read_opt(j, "eps_theta", p.eps_theta);
  read_opt(j, "eps_h", p.eps_h);
  read_opt(j, "eps_p", p.eps_p);
  return p;
}

json env_to_json(const GraspStackConfig& c) {
  return {{"dt", c.dt},
          {"step_cap", c.step_cap},
          {"sub_step_cap", c.sub_step_cap},
          {"jitter_xy", c.jitter_xy},
          {"jitter_yaw", c.jitter_yaw},
          {"gripper_jitter_xy", c.gripper_jitter_xy},
          {"gripper_jitter_z", c.gripper_jitter_z},
          {"gripper_jitter_yaw", c.gripper_jitter_yaw},
          {"table_half_extent", c.table_half_extent},
          {"z_max", c.z_max},
          {"prism_half_width", c.prism_half_width},
          {"prism_half_height", c.prism_half_height},
          {"cube_size", c.cube_size},
          {"grasp_offset", c.grasp_offset},
          {"r_cyl", c.r_cyl},
          {"orient_radius", c.orient_radius},
          {"staging_height", c.staging_height},
          {"v_max", c.v_max},
          {"yaw_rate_max", c.yaw_rate_max},
          {"finger_rate_max", c.finger_rate_max},
          {"prism_xy", {c.prism_xy.x(), c.prism_xy.y()}},
          {"cube_xy", {c.cube_xy.x(), c.cube_xy.y()}},
          {"gripper_start", {c.gripper_start.x(), c.gripper_start.y(), c.gripper_start.z()}},
          {"rewards", rewards_to_json(c.rewards)}};
}

GraspStackConfig env_from_json(const json& j) {
  GraspStackConfig c;
  reject_unknown(j, {"dt", "step_cap", "sub_step_cap", "jitter_xy", "jitter_yaw", "gripper_jitter_xy",
                     "gripper_jitter_z", "gripper_jitter_yaw", "table_half_extent", "z_max", "prism_half_width",
                     "prism_half_height", "cube_size", "grasp_offset", "r_cyl", "orient_radius", "staging_height",
                     "v_max", "yaw_rate_max", "finger_rate_max", "prism_xy", "cube_xy", "gripper_start", "rewards"},
                 "env");
  read_opt(j, "dt", c.dt);
  read_opt(j, "step_cap", c.step_cap);
  read_opt(j, "sub_step_cap", c.sub_step_cap);
  read_opt(j, "jitter_xy", c.jitter_xy);
  read_opt(j, "jitter_yaw", c.jitter_yaw);
  read_opt(j, "gripper_jitter_xy", c.gripper_jitter_xy);
  read_opt(j, "gripper_jitter_z", c.gripper_jitter_z);
  read_opt(j, "gripper_jitter_yaw", c.gripper_jitter_yaw);
  read_opt(j, "table_half_extent", c.table_half_extent);
  read_opt(j, "z_max", c.z_max);
  read_opt(j, "prism_half_width", c.prism_half_width);
  read_opt(j, "prism_half_height", c.prism_half_height);
  read_opt(j, "cube_size", c.cube_size);
  read_opt(j, "grasp_offset", c.grasp_offset);
  read_opt(j, "r_cyl", c.r_cyl);
  read_opt(j, "orient_radius", c.orient_radius);
  read_opt(j, "staging_height", c.staging_height);
  read_opt(j, "v_max", c.v_max);
  read_opt(j, "yaw_rate_max", c.yaw_rate_max);
  read_opt(j, "finger_rate_max", c.finger_rate_max);
  read_vec2(j, "prism_xy", c.prism_xy);
  read_vec2(j, "cube_xy", c.cube_xy);
  read_vec3(j, "gripper_start", c.gripper_start);
  if (j.contains("rewards")) c.rewards = rewards_from_json(j.at("rewards"));
  return c;
}

json q_to_json(const QLearnerConfig& q) {
  return {{"gamma", q.gamma},
          {"learning_rate", q.learning_rate},
          {"batch_size", q.batch_size},
          {"target_sync_interval", q.target_sync_interval},
          {"replay_capacity", q.replay_capacity},
          {"min_fill", q.min_fill},
          {"epsilon_start", q.epsilon.start},
          {"epsilon_end", q.epsilon.end},
          {"epsilon_horizon", q.epsilon.horizon},
          {"hidden", q.hidden},
          {"updates_per_decision", q.updates_per_decision},
          {"reward_scale", q.reward_scale}};
}

QLearnerConfig q_from_json(const json& j, QLearnerConfig q) {
  reject_unknown(j, {"gamma", "learning_rate", "batch_size", "target_sync_interval", "replay_capacity", "min_fill",
                     "epsilon_start", "epsilon_end", "epsilon_horizon", "hidden", "updates_per_decision", "reward_scale"},
                 "q");
  read_opt(j, "gamma", q.gamma);
  read_opt(j, "learning_rate", q.learning_rate);
  read_opt(j, "batch_size", q.batch_size);
  read_opt(j, "target_sync_interval", q.target_sync_interval);
  read_opt(j, "replay_capacity", q.replay_capacity);
  read_opt(j, "min_fill", q.min_fill);
  read_opt(j, "epsilon_start", q.epsilon.start);
  read_opt(j, "epsilon_end", q.epsilon.end);
  read_opt(j, "epsilon_horizon", q.epsilon.horizon);
  read_opt(j, "hidden", q.hidden);
  read_opt(j, "updates_per_decision", q.updates_per_decision);
  read_opt(j, "reward_scale", q.reward_scale);
  return q;
}

json cem_to_json(const CemConfig& c) {
  return {{"population", c.population},
          {"elite_fraction", c.elite_fraction},
          {"noise_floor", c.noise_floor},
          {"iterations", c.iterations},
          {"episodes_per_candidate", c.episodes_per_candidate},
          {"init_stddev", c.init_stddev}};
}

CemConfig cem_from_json(const json& j) {
  CemConfig c;
  reject_unknown(j, {"population", "elite_fraction", "noise_floor", "iterations", "episodes_per_candidate",
                     "init_stddev"},
                 "cem");
  read_opt(j, "population", c.population);
  read_opt(j, "elite_fraction", c.elite_fraction);
  read_opt(j, "noise_floor", c.noise_floor);
  read_opt(j, "iterations", c.iterations);
  read_opt(j, "episodes_per_candidate", c.episodes_per_candidate);
  read_opt(j, "init_stddev", c.init_stddev);
  return c;
}

json plan_to_json(const ConceptPlan& p) {
  json j = {{"learner", p.learner}, {"budget", p.budget}, {"target_success", p.target_success}};
  if (p.task) j["task"] = to_string(*p.task);
  if (p.learner == "dqn") j["q"] = q_to_json(p.q);
  if (p.learner == "cem") {
    j["cem"] = cem_to_json(p.cem);
    j["hidden"] = p.hidden;
    j["output_bounds"] = p.output_bounds;
  }
  if (!p.checkpoint.empty()) j["checkpoint"] = p.checkpoint;
  return j;
}

ConceptPlan plan_from_json(const json& j) {
  ConceptPlan p;
  reject_unknown(j, {"learner", "budget", "task", "target_success", "q", "cem", "hidden", "output_bounds",
                     "checkpoint"},
                 "concept plan");
  p.learner = j.at("learner").get<std::string>();
  if (p.learner != "scripted" && p.learner != "dqn" && p.learner != "cem" && p.learner != "checkpoint") {
    throw std::invalid_argument("unknown learner: " + p.learner);
  }
  read_opt(j, "budget", p.budget);
  if (j.contains("task")) p.task = task_from_string(j.at("task").get<std::string>());
  read_opt(j, "target_success", p.target_success);
  if (p.learner == "dqn") p.q = benchmark_q_config();
  if (j.contains("q")) p.q = q_from_json(j.at("q"), p.q);
  if (j.contains("cem")) p.cem = cem_from_json(j.at("cem"));
  read_opt(j, "hidden", p.hidden);
  read_opt(j, "output_bounds", p.output_bounds);
  read_opt(j, "checkpoint", p.checkpoint);
  return p;
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

/// The plan for `id`: the configured one, or a default from the node's policy reference.
ConceptPlan plan_for(const ExperimentConfig& cfg, const ConceptNode& node) {
  auto it = cfg.concepts.find(node.id.str());
  if (it != cfg.concepts.end()) return it->second;
  ConceptPlan p;
  if (node.policy.kind == "scripted") {
    p.learner = "scripted";
  } else if (!node.policy.checkpoint.empty()) {
    p.learner = "checkpoint";
    p.checkpoint = node.policy.checkpoint;
  } else if (node.policy.kind == "dqn" && node.kind == ConceptKind::Selector) {
    p.learner = "dqn";
    p.budget = 50'000;
    p.q = benchmark_q_config();
  } else {
    throw std::invalid_argument("concept " + node.id.str() + " has neither a learner nor a script");
  }
  return p;
}

Task task_for(const ExperimentConfig& cfg, const ConceptNetwork& net, const ConceptNode& node,
              const ConceptPlan& plan) {
  if (plan.task) return *plan.task;
  if (node.id == net.root().id) return cfg.task;
  if (auto t = training_task(node.id.str())) return *t;
  throw std::invalid_argument("no training task known for concept " + node.id.str() + "; set \"task\"");
}

int cap_for(const GraspStackConfig& env, Task task) { return task == Task::Full ? env.step_cap : env.sub_step_cap; }

std::vector<double> default_bounds(const ConceptNode& node, const GraspStackConfig& env) {
  const double limits[5] = {env.v_max, env.v_max, env.v_max, env.yaw_rate_max, env.finger_rate_max};
  std::vector<double> bounds;
  if (node.action_map.is_identity()) {
    bounds.assign(limits, limits + 5);
  } else {
    for (int i : node.action_map.learned) bounds.push_back(limits[i]);
  }
  return bounds;
}

std::string checkpoint_path(const ExperimentConfig& cfg, const std::string& id) {
  return (fs::path(cfg.output_dir) / (id + ".policy.json")).string();
}

std::string curve_path(const ExperimentConfig& cfg, const std::string& id) {
  return (fs::path(cfg.output_dir) / ("curve_" + id + ".csv")).string();
}

void bind_from_checkpoint(const ConceptNode& node, const std::string& path, PolicyBindings& bindings,
                          double gamma) {
  if (node.kind == ConceptKind::Selector) {
    bindings.bind_selector(node.id, std::make_shared<QPolicy>(load_policy_file(path)), gamma);
  } else {
    std::vector<double> bounds;
    Mlpd net = load_mlp(read_text_file(path), &bounds);
    bindings.bind_control(node.id, std::make_shared<MlpControlPolicy>(std::move(net), std::move(bounds)));
  }
}

std::string metadata_text(const RunRecord& r) {
  std::ostringstream out;
  out << "config " << r.config_echo << "\n";
  out << "train_transitions " << r.train_transitions << "\n";
  out << "eval_transitions " << r.eval_transitions << "\n";
  out << "env_transitions " << r.env_transitions << "\n";
  out << "selector_decisions " << r.selector_decisions << "\n";
  for (const auto& c : r.concepts) {
    out << "concept " << c.id << " learner " << c.learner << " train_transitions " << c.env_transitions
        << " eval_transitions " << c.eval_transitions << " selector_decisions " << c.selector_decisions
        << " learner_steps " << c.learner_steps << " success_rate " << c.final_success_rate << "\n";
  }
  if (r.final_eval) {
    out << "final_eval episodes " << r.final_eval->episodes << " successes " << r.final_eval->successes
        << " mean_return " << r.final_eval->mean_return << "\n";
  }
  for (const auto& c : r.checkpoints) out << "checkpoint " << c << "\n";
  out << "complete " << (r.complete ? 1 : 0) << "\n";
  return out.str();
}

void add_concept(RunRecord& record, const ConceptRecord& c) {
  record.concepts.push_back(c);
  record.train_transitions += c.env_transitions;
  record.eval_transitions += c.eval_transitions;
  record.env_transitions = record.train_transitions + record.eval_transitions;
  record.selector_decisions += c.selector_decisions;
  if (!c.checkpoint.empty()) record.checkpoints.push_back(c.checkpoint);
}

/// Trains or binds one node, assuming its descendants are bound. Returns a
/// record for learned nodes.
std::optional<ConceptRecord> realize(const ExperimentConfig& cfg, const ConceptNetwork& net, const ConceptNode& node,
                                     PolicyBindings& bindings, std::size_t ordinal) {
  const ConceptPlan plan = plan_for(cfg, node);
  const bool write = !cfg.output_dir.empty();
  if (write) fs::create_directories(cfg.output_dir);
  if (plan.learner == "scripted") {
    if (node.kind != ConceptKind::Control) {
      throw std::invalid_argument("selector " + node.id.str() + " cannot be scripted");
    }
    ConceptNode scripted = node;
    scripted.policy.kind = "scripted";
    if (scripted.policy.name.empty()) scripted.policy.name = node.id.str();
    bindings.bind_control(node.id, make_scripted_policy(scripted, cfg.env));
    return std::nullopt;
  }
  if (plan.learner == "checkpoint") {
    bind_from_checkpoint(node, resolve(cfg.base_dir, plan.checkpoint), bindings, plan.q.gamma);
    return std::nullopt;
  }

  const Task task = task_for(cfg, net, node, plan);
  GraspStackEnv env(cfg.env, task);
  ConceptRecord rec;
  rec.id = node.id.str();
  rec.learner = plan.learner;
  const std::uint64_t seed = derive_seed(cfg.seed, node.id.str() + "#" + std::to_string(ordinal));

  if (plan.learner == "dqn") {
    if (node.kind != ConceptKind::Selector) {
      throw std::invalid_argument("dqn learner needs a selector; " + node.id.str() + " is a control concept");
    }
    SelectorTrainingConfig sc;
    sc.q = plan.q;
    sc.q.seed = seed;
    sc.budget = plan.budget;
    sc.eval_every_episodes = cfg.eval.every_episodes;
    sc.eval_episodes = cfg.eval.episodes;
    sc.eval_seed = cfg.eval.seed;
    sc.step_cap = cap_for(cfg.env, task);
    const SelectorTrainingResult r = train_selector(net, node.id, bindings, env, sc);
    bindings.bind_selector(node.id, r.policy, sc.q.gamma);
    rec.curve = r.curve;
    rec.env_transitions = r.env_transitions;
    rec.eval_transitions = r.eval_transitions;
    rec.selector_decisions = r.selector_decisions;
    rec.learner_steps = r.learner_steps;
    rec.final_success_rate = r.best_success_rate;
    if (write) {
      rec.checkpoint = checkpoint_path(cfg, rec.id);
      save_policy_file(rec.checkpoint, *r.policy, sc.q);
    }
  } else if (plan.learner == "cem") {
    if (node.kind != ConceptKind::Control) {
      throw std::invalid_argument("cem learner needs a control concept; " + node.id.str() + " is a selector");
    }
    CemTrainingConfig cc;
    cc.cem = plan.cem;
    cc.cem.seed = seed;
    cc.hidden = plan.hidden;
    cc.output_bounds = plan.output_bounds.empty() ? default_bounds(node, cfg.env) : plan.output_bounds;
    cc.budget = plan.budget;
    cc.eval_episodes = cfg.eval.episodes;
    cc.eval_seed = cfg.eval.seed;
    cc.episode_cap = cap_for(cfg.env, task);
    CemTrainingResult r = train_cem(net, node.id, env, cc);
    bindings.bind_control(node.id, std::make_shared<MlpControlPolicy>(r.net, r.output_bounds));
    rec.curve = r.curve;
    rec.env_transitions = r.env_transitions;
    rec.eval_transitions = r.eval_transitions;
    rec.learner_steps = static_cast<long>(r.search.history.size());
    rec.final_success_rate = r.final_success_rate;
    if (write) {
      rec.checkpoint = checkpoint_path(cfg, rec.id);
      write_text_file(rec.checkpoint, save_mlp(r.net, "cem-mlp", r.output_bounds) + "\n");
    }
  } else {
    throw std::invalid_argument("unknown learner: " + plan.learner);
  }
  if (write) write_text_file(curve_path(cfg, rec.id), curve_csv(rec.curve));
  return rec;
}

}  // namespace

QLearnerConfig benchmark_q_config() {
  QLearnerConfig q;
  q.updates_per_decision = 8;
  return q;
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h ^ (master + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void write_text_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ExperimentConfig::validate() const {
  if (eval.every_episodes <= 0 || eval.episodes <= 0 || eval.final_episodes < 0) {
    throw std::invalid_argument("evaluation cadence values must be positive");
  }
  env.validate();
  for (const auto& [id, plan] : concepts) {
    if ((plan.learner == "dqn" || plan.learner == "cem") && plan.budget <= 0) {
      throw std::invalid_argument("concept " + id + " needs a positive budget");
    }
    if (plan.learner == "checkpoint" && plan.checkpoint.empty()) {
      throw std::invalid_argument("concept " + id + " uses a checkpoint but names none");
    }
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir) {
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"topology", "task", "seed", "output_dir", "env", "eval", "concepts"}, "experiment config");
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    cfg.topology = j.at("topology").get<std::string>();
    if (j.contains("task")) cfg.task = task_from_string(j.at("task").get<std::string>());
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "output_dir", cfg.output_dir);
    if (j.contains("env")) cfg.env = env_from_json(j.at("env"));
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      reject_unknown(e, {"every_episodes", "episodes", "seed", "final_episodes"}, "eval");
      read_opt(e, "every_episodes", cfg.eval.every_episodes);
      read_opt(e, "episodes", cfg.eval.episodes);
      read_opt(e, "seed", cfg.eval.seed);
      read_opt(e, "final_episodes", cfg.eval.final_episodes);
    }
    if (j.contains("concepts")) {
      for (const auto& [id, plan] : j.at("concepts").items()) cfg.concepts[id] = plan_from_json(plan);
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const std::string base = fs::path(path).parent_path().string();
  return parse_experiment_config(read_text_file(path), base.empty() ? "." : base);
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json concepts = json::object();
  for (const auto& [id, plan] : cfg.concepts) concepts[id] = plan_to_json(plan);
  const json j = {{"topology", cfg.topology},
                  {"task", to_string(cfg.task)},
                  {"seed", cfg.seed},
                  {"output_dir", cfg.output_dir},
                  {"env", env_to_json(cfg.env)},
                  {"eval",
                   {{"every_episodes", cfg.eval.every_episodes},
                    {"episodes", cfg.eval.episodes},
                    {"seed", cfg.eval.seed},
                    {"final_episodes", cfg.eval.final_episodes}}},
                  {"concepts", concepts}};
  return j.dump();
}

ConceptNetwork load_config_network(const ExperimentConfig& cfg) {
  if (cfg.topology == "builtin:flat") return flat_network(cfg.env);
  if (cfg.topology == "builtin:tree") return tree_network(cfg.env);
  if (cfg.topology == "builtin:monolith") return monolith_network(cfg.env);
  return load_topology_file(resolve(cfg.base_dir, cfg.topology));
}

TrainOutcome train_all(const ExperimentConfig& cfg) {
  cfg.validate();
  ConceptNetwork net = load_config_network(cfg);
  for (const auto& [id, plan] : cfg.concepts) {
    if (!net.find(ConceptId(id))) throw std::invalid_argument("config names unknown concept " + id);
  }
  RunRecord record;
  record.config_echo = experiment_config_json(cfg);
  PolicyBindings bindings;
  const bool write = !cfg.output_dir.empty();

  const auto order = net.training_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const ConceptNode& node = net.node(order[i]);
    const ConceptPlan plan = plan_for(cfg, node);
    const auto rec = realize(cfg, net, node, bindings, i);
    if (!rec) continue;
    add_concept(record, *rec);
    if (plan.target_success > 0.0 && rec->final_success_rate < plan.target_success) {
      if (write) write_text_file((fs::path(cfg.output_dir) / "run_metadata.txt").string(), metadata_text(record));
      throw BudgetExhausted("concept " + rec->id + " reached success " + std::to_string(rec->final_success_rate) +
                                " below its target " + std::to_string(plan.target_success) + " within budget",
                            record);
    }
  }

  if (cfg.eval.final_episodes > 0) {
    GraspStackEnv env(cfg.env, cfg.task);
    const EvalStats stats =
        evaluate(net, bindings, env, cfg.eval.final_episodes, cfg.eval.seed, cap_for(cfg.env, cfg.task));
    record.final_eval = stats;
    record.eval_transitions += stats.transitions;
    record.env_transitions = record.train_transitions + record.eval_transitions;
    if (write) {
      char line[256];
      std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%ld\n", stats.episodes, stats.successes,
                    stats.success_rate, stats.mean_return, stats.transitions);
      write_text_file((fs::path(cfg.output_dir) / "final_eval.csv").string(),
                      std::string("episodes,successes,success_rate,mean_return,transitions\n") + line);
    }
  }
  record.complete = true;
  if (write) write_text_file((fs::path(cfg.output_dir) / "run_metadata.txt").string(), metadata_text(record));
  return {record, TrainedSystem{std::move(net), std::move(bindings)}};
}

TrainedSystem load_system(const ExperimentConfig& cfg) {
  cfg.validate();
  ConceptNetwork net = load_config_network(cfg);
  PolicyBindings bindings;
  for (const auto& id : net.training_order()) {
    const ConceptNode& node = net.node(id);
    ConceptPlan plan = plan_for(cfg, node);
    if (plan.learner == "dqn" || plan.learner == "cem") {
      if (cfg.output_dir.empty()) throw std::invalid_argument("no output_dir to load " + id.str() + " from");
      plan.learner = "checkpoint";
      plan.checkpoint = fs::absolute(checkpoint_path(cfg, id.str())).string();
    }
    if (plan.learner == "scripted") {
      ConceptNode scripted = node;
      scripted.policy.kind = "scripted";
      if (scripted.policy.name.empty()) scripted.policy.name = node.id.str();
      bindings.bind_control(node.id, make_scripted_policy(scripted, cfg.env));
    } else {
      bind_from_checkpoint(node, resolve(cfg.base_dir, plan.checkpoint), bindings, plan.q.gamma);
    }
  }
  return {std::move(net), std::move(bindings)};
}

ConceptRecord train_concept(const ExperimentConfig& cfg, const std::string& concept_id) {
  cfg.validate();
  const ConceptNetwork full = load_config_network(cfg);
  const ConceptId id(concept_id);
  if (!full.find(id)) throw std::invalid_argument("unknown concept " + concept_id);
  PolicyBindings bindings;
  const auto order = full.training_order(id);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const ConceptNode& node = full.node(order[i]);
    ConceptPlan plan = plan_for(cfg, node);
    if (plan.learner == "dqn" || plan.learner == "cem") {
      const std::string path = checkpoint_path(cfg, node.id.str());
      if (cfg.output_dir.empty() || !fs::exists(path)) {
        throw std::invalid_argument("descendant " + node.id.str() + " of " + concept_id + " is untrained");
      }
      bind_from_checkpoint(node, path, bindings, plan.q.gamma);
    } else {
      realize(cfg, full, node, bindings, i);
    }
  }
  const auto rec = realize(cfg, full, full.node(id), bindings, order.size() - 1);
  if (!rec) throw std::invalid_argument("concept " + concept_id + " has no learner to train");
  const ConceptPlan plan = plan_for(cfg, full.node(id));
  if (plan.target_success > 0.0 && rec->final_success_rate < plan.target_success) {
    RunRecord partial;
    partial.config_echo = experiment_config_json(cfg);
    add_concept(partial, *rec);
    throw BudgetExhausted("concept " + concept_id + " missed its target success within budget", partial);
  }
  return *rec;
}

EvalStats evaluate_system(const TrainedSystem& system, const GraspStackConfig& env_cfg, Task task, int episodes,
                          std::uint64_t seed) {
  GraspStackEnv env(env_cfg, task);
  return evaluate(system.net, system.bindings, env, episodes, seed, cap_for(env_cfg, task));
}

// ------------------------------------------------------------- comparison

namespace {

ArmReport run_arm(const std::string& name, const ConceptNetwork& net, const CompareConfig& cfg, long budget,
                  long grasp_budget, int updates_per_decision) {
  ArmReport arm;
  arm.name = name;
  arm.budget = budget;
  PolicyBindings bindings;
  bind_scripted(net, cfg.env, bindings);

  auto make_cfg = [&](long b, int cap, const std::string& tag) {
    SelectorTrainingConfig sc;
    sc.q = cfg.q;
    sc.q.seed = derive_seed(cfg.seed, name + "/" + tag);
    sc.q.updates_per_decision = updates_per_decision;
    sc.budget = b;
    sc.eval_every_episodes = cfg.eval.every_episodes;
    sc.eval_episodes = cfg.eval.episodes;
    sc.eval_seed = cfg.eval.seed;
    sc.step_cap = cap;
    return sc;
  };

  if (net.find(ConceptId("grasp"))) {
    GraspStackEnv genv(cfg.env, Task::Grasp);
    SelectorTrainingConfig gc = make_cfg(grasp_budget, cfg.env.sub_step_cap, "grasp");
    gc.q.reward_scale = 1.0 / cfg.env.rewards.b_lift;
    const auto r = train_selector(net, ConceptId("grasp"), bindings, genv, gc);
    bindings.bind_selector(ConceptId("grasp"), r.policy, cfg.q.gamma);
    arm.pretrain_transitions = r.env_transitions;
    arm.decisions["grasp"] = r.selector_decisions;
  }
  GraspStackEnv env(cfg.env, Task::Full);
  const auto r = train_selector(net, ConceptId("root"), bindings, env, make_cfg(budget, cfg.env.step_cap, "root"));
  arm.curve = r.curve;
  arm.decisions["root"] = r.selector_decisions;
  arm.train_transitions = arm.pretrain_transitions + r.env_transitions;
  const long t50 = transitions_to_threshold(r.curve, 0.5);
  const long t95 = transitions_to_threshold(r.curve, 0.95);
  arm.t50 = t50 < 0 ? -1 : arm.pretrain_transitions + t50;
  arm.t95 = t95 < 0 ? -1 : arm.pretrain_transitions + t95;
  arm.final_success_rate = r.curve.back().success_rate;
  arm.best_success_rate = r.best_success_rate;
  return arm;
}

}  // namespace

ComparisonReport compare_hierarchies(const CompareConfig& cfg) {
  cfg.env.validate();
  ComparisonReport report;
  const ArmReport* flat = nullptr;
  const ArmReport* tree = nullptr;
  const ArmReport* mono = nullptr;
  if (cfg.hierarchy_budget > 0) {
    report.arms.push_back(run_arm("flat", flat_network(cfg.env), cfg, cfg.hierarchy_budget, 0, cfg.q.updates_per_decision));
    if (cfg.grasp_budget > 0) {
      report.arms.push_back(run_arm("tree", tree_network(cfg.env), cfg, cfg.hierarchy_budget, cfg.grasp_budget,
                                    cfg.q.updates_per_decision));
    }
  }
  if (cfg.monolith_budget > 0) {
    report.arms.push_back(
        run_arm("monolith", monolith_network(cfg.env, cfg.monolith_speed), cfg, cfg.monolith_budget, 0,
                cfg.monolith_updates_per_decision));
  }
  for (const auto& arm : report.arms) {
    if (arm.name == "flat") flat = &arm;
    if (arm.name == "tree") tree = &arm;
    if (arm.name == "monolith") mono = &arm;
  }
  if (mono) {
    report.monolith_censored = mono->t50 < 0;
    const double m50 = report.monolith_censored ? static_cast<double>(mono->budget) : static_cast<double>(mono->t50);
    auto ratio = [&](const ArmReport* h) -> std::optional<double> {
      if (!h || h->t95 < 0) return std::nullopt;
      return m50 / static_cast<double>(std::max<long>(h->t95, 1));
    };
    report.speedup_flat = ratio(flat);
    report.speedup_tree = ratio(tree);
  }
  if (!cfg.output_dir.empty()) {
    for (const auto& arm : report.arms) {
      write_text_file((fs::path(cfg.output_dir) / ("curve_" + arm.name + ".csv")).string(), curve_csv(arm.curve));
    }
    write_text_file((fs::path(cfg.output_dir) / "comparison.csv").string(), comparison_csv(report));
    write_text_file((fs::path(cfg.output_dir) / "comparison.txt").string(), comparison_summary(report));
  }
  return report;
}

std::string comparison_csv(const ComparisonReport& report) {
  std::string out =
      "arm,budget,train_transitions,pretrain_transitions,t50,t95,final_success_rate,best_success_rate,decisions\n";
  char line[512];
  for (const auto& a : report.arms) {
    std::string decisions;
    for (const auto& [id, n] : a.decisions) {
      if (!decisions.empty()) decisions += ';';
      decisions += id + "=" + std::to_string(n);
    }
    std::snprintf(line, sizeof line, "%s,%ld,%ld,%ld,%ld,%ld,%.17g,%.17g,%s\n", a.name.c_str(), a.budget,
                  a.train_transitions, a.pretrain_transitions, a.t50, a.t95, a.final_success_rate,
                  a.best_success_rate, decisions.c_str());
    out += line;
  }
  return out;
}

std::string comparison_summary(const ComparisonReport& report) {
  std::ostringstream out;
  if (report.arms.empty()) {
    out << "no arms trained\n";
    return out.str();
  }
  for (const auto& a : report.arms) {
    out << a.name << ": t50=" << a.t50 << " t95=" << a.t95 << " best_success=" << a.best_success_rate
        << " train_transitions=" << a.train_transitions;
    for (const auto& [id, n] : a.decisions) out << " decisions[" << id << "]=" << n;
    out << "\n";
  }
  const char* bound = report.monolith_censored ? ">=" : "=";
  if (report.speedup_flat) out << "speedup(flat) " << bound << " " << *report.speedup_flat << "\n";
  if (report.speedup_tree) out << "speedup(tree) " << bound << " " << *report.speedup_tree << "\n";
  return out.str();
}

// ------------------------------------------------------------------ traces

std::string trace_csv(const EpisodeTrace& trace, const FeatureSchema& schema) {
  std::string out = "step,concept,noop";
  for (const auto& n : schema.names()) out += "," + n;
  const Eigen::Index actions = trace.steps.empty() ? 0 : trace.steps.front().transition.action_vector.size();
  for (Eigen::Index a = 0; a < actions; ++a) out += ",a" + std::to_string(a);
  out += ",reward,tau\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepRecord& s = trace.steps[i];
    out += std::to_string(i) + "," + s.concept_id.str() + "," + (s.noop ? "1" : "0");
    for (Eigen::Index k = 0; k < s.transition.s.size(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", s.transition.s[k]);
      out += buf;
    }
    for (Eigen::Index k = 0; k < s.transition.action_vector.size(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", s.transition.action_vector[k]);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g,%d\n", s.transition.r, s.transition.tau ? 1 : 0);
    out += buf;
  }
  return out;
}

double replay_trace_csv(const std::string& csv, const GraspStackConfig& env_cfg, Task task, std::uint64_t seed) {
  std::istringstream in(csv);
  std::string header;
  if (!std::getline(in, header)) throw std::invalid_argument("empty trace");
  std::vector<std::string> cols;
  {
    std::stringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  const auto& names = grasp_stack_schema()->names();
  const std::size_t nf = names.size();
  if (cols.size() != 3 + nf + GraspStackEnv::kActionSize + 2) throw std::invalid_argument("trace columns do not match the environment");
  for (std::size_t k = 0; k < nf; ++k) {
    if (cols[3 + k] != names[k]) throw std::invalid_argument("trace feature column mismatch: " + cols[3 + k]);
  }

  GraspStackEnv env(env_cfg, task);
  env.reset(seed);
  double worst = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() != cols.size()) throw std::invalid_argument("ragged trace row");
    const Eigen::VectorXd& now = env.feature_values();
    for (std::size_t k = 0; k < nf; ++k) {
      worst = std::max(worst, std::abs(std::stod(cells[3 + k]) - now[static_cast<Eigen::Index>(k)]));
    }
    Eigen::VectorXd action(GraspStackEnv::kActionSize);
    for (Eigen::Index a = 0; a < action.size(); ++a) action[a] = std::stod(cells[3 + nf + static_cast<std::size_t>(a)]);
    env.step(action);
  }
  return worst;
}

}  // namespace cnrl
