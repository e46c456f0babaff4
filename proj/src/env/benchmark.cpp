#include "cnrl/env/benchmark.hpp"

#include "cnrl/env/scripted.hpp"

#include <stdexcept>

namespace cnrl {

namespace {

constexpr double kSelectorScale = 3.0;

FeatureTerm copy(const std::string& source, double scale = 1.0) {
  return {FeatureTerm::Kind::Copy, {source}, "", scale};
}

FeatureTerm sincos(const std::string& source) { return {FeatureTerm::Kind::SinCos, {source}, source, 1.0}; }

Interval interval(const std::string& feature, double lower, double upper) { return {feature, lower, upper}; }

Comparison cmp(const std::string& feature, CompareOp op, double threshold) { return {feature, op, threshold}; }

ConceptNode control(const std::string& id) {
  ConceptNode n;
  n.id = ConceptId(id);
  n.kind = ConceptKind::Control;
  n.policy.kind = "scripted";
  n.policy.name = id;
  return n;
}

ConceptNode selector(const std::string& id, std::vector<std::string> children, const std::string& reward) {
  ConceptNode n;
  n.id = ConceptId(id);
  n.kind = ConceptKind::Selector;
  for (auto& c : children) n.children.emplace_back(std::move(c));
  n.state_map = selector_observation();
  n.policy.kind = "dqn";
  n.reward = reward;
  return n;
}

}  // namespace

ObservationSpec selector_observation() {
  std::vector<FeatureTerm> terms;
  for (const char* f : {"pinch_x", "pinch_y", "pinch_z", "pinch_prism_dist", "prism_x", "prism_y", "prism_z",
                        "cube_x", "cube_y", "cube_z", "stack_dist"}) {
    terms.push_back(copy(f, kSelectorScale));
  }
  terms.push_back(copy("held"));
  return ObservationSpec::from_terms(std::move(terms));
}

std::vector<ConceptNode> leaf_nodes(const GraspStackConfig& cfg) {
  const RewardParams& p = cfg.rewards;
  using Op = CompareOp;

  ConceptNode staging1 = control("staging1");
  staging1.validity = {{interval("held", 0.0, 0.0)}};
  staging1.terminal = {{TerminationKind::Goal, {cmp("stage1_dist", Op::Less, p.eps_d)}}};

  ConceptNode orient = control("orient");
  orient.validity = {{interval("held", 0.0, 0.0), interval("grasp_dist", 0.0, cfg.orient_radius)}};
  orient.terminal = {
      {TerminationKind::Goal, {cmp("grasp_dist", Op::Less, p.eps_d), cmp("orient_angle", Op::Less, p.eps_theta)}}};
  {
    std::vector<FeatureTerm> terms;
    for (const char* f : {"grasp_dx", "grasp_dy", "grasp_dz", "grasp_dist", "orient_angle", "orient_yaw_error",
                          "orient_yaw_norm", "prism_x", "prism_y", "prism_z"}) {
      terms.push_back(copy(f));
    }
    terms.push_back(sincos("prism_yaw"));
    terms.push_back(sincos("pinch_yaw"));
    terms.push_back(copy("finger_sep"));
    terms.push_back(copy("held"));
    orient.state_map = ObservationSpec::from_terms(std::move(terms));
  }
  orient.action_map = {5, {0, 1, 2, 3}, {{4, cfg.finger_rate_max}}};
  orient.reward = "orient";

  ConceptNode lift = control("lift");
  lift.validity = {{interval("grasp_dist", 0.0, 2.0 * p.eps_d), interval("orient_angle", 0.0, 1.5 * p.eps_theta),
                    interval("drift_xy", 0.0, cfg.r_cyl)}};
  lift.terminal = {
      {TerminationKind::Goal, {cmp("held", Op::GreaterEqual, 0.5), cmp("prism_height", Op::Greater, p.eps_h)}},
      {TerminationKind::RegionExit, {cmp("held", Op::Less, 0.5), cmp("prism_height", Op::Greater, 0.005)}}};
  {
    std::vector<FeatureTerm> terms;
    for (const char* f : {"grasp_dx", "grasp_dy", "grasp_dz", "grasp_dist", "orient_angle", "drift_dx", "drift_dy",
                          "drift_xy", "prism_height", "finger_sep", "held"}) {
      terms.push_back(copy(f));
    }
    lift.state_map = ObservationSpec::from_terms(std::move(terms));
  }
  lift.action_map = {5, {0, 1, 2, 4}, {{3, 0.0}}};
  lift.reward = "lift";

  ConceptNode staging2 = control("staging2");
  staging2.validity = {{interval("held", 1.0, 1.0)}};
  staging2.terminal = {{TerminationKind::Goal, {cmp("stage2_dist", Op::Less, p.eps_d)}}};

  ConceptNode stack = control("stack");
  stack.validity = {{interval("held", 1.0, 1.0), interval("stack_xy_dist", 0.0, cfg.r_cyl)}};
  stack.terminal = {
      {TerminationKind::Goal, {cmp("stack_dist", Op::Less, p.eps_d), cmp("stack_angle", Op::Less, p.eps_theta)}},
      {TerminationKind::RegionExit, {cmp("prism_height", Op::Less, 0.002)}}};
  {
    std::vector<FeatureTerm> terms;
    for (const char* f : {"stack_dx", "stack_dy", "stack_dz", "stack_dist", "stack_xy_dist", "stack_angle",
                          "stack_yaw_error", "prism_height", "held"}) {
      terms.push_back(copy(f));
    }
    terms.push_back(sincos("prism_yaw"));
    terms.push_back(sincos("cube_yaw"));
    stack.state_map = ObservationSpec::from_terms(std::move(terms));
  }
  stack.action_map = {5, {0, 1, 2, 3}, {{4, -cfg.finger_rate_max}}};
  stack.reward = "stack";

  return {staging1, orient, lift, staging2, stack};
}

std::vector<ConceptNode> flat_nodes(const GraspStackConfig& cfg) {
  std::vector<ConceptNode> nodes = {selector("root", {"staging1", "orient", "lift", "staging2", "stack"}, "full")};
  for (auto& n : leaf_nodes(cfg)) nodes.push_back(std::move(n));
  return nodes;
}

ConceptNetwork flat_network(const GraspStackConfig& cfg) { return build_network(flat_nodes(cfg)); }

std::vector<ConceptNode> tree_nodes(const GraspStackConfig& cfg) {
  std::vector<ConceptNode> nodes = {selector("root", {"staging1", "grasp", "staging2", "stack"}, "full"),
                                    selector("grasp", {"orient", "lift"}, "grasp")};
  for (auto& n : leaf_nodes(cfg)) nodes.push_back(std::move(n));
  return nodes;
}

ConceptNetwork tree_network(const GraspStackConfig& cfg) { return build_network(tree_nodes(cfg)); }

std::vector<ConceptNode> monolith_nodes(const GraspStackConfig& cfg, double speed) {
  (void)cfg;
  if (!(speed > 0.0)) throw std::invalid_argument("monolith speed must be positive");
  const double levels[3] = {-speed, 0.0, speed};
  const char tags[3] = {'n', 'z', 'p'};
  std::vector<ConceptNode> children;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        std::string id = std::string("move_") + tags[i] + tags[j] + tags[k];
        ConceptNode n = control(id);
        n.max_steps = 1;
        n.policy.name = "translate_servo";
        n.policy.params = {levels[i], levels[j], levels[k]};
        ids.push_back(id);
        children.push_back(std::move(n));
      }
    }
  }
  std::vector<ConceptNode> nodes = {selector("root", ids, "full")};
  for (auto& n : children) nodes.push_back(std::move(n));
  return nodes;
}

ConceptNetwork monolith_network(const GraspStackConfig& cfg, double speed) {
  return build_network(monolith_nodes(cfg, speed));
}

std::optional<TerminationKind> terminal_check(const std::string& concept_name, const Features& raw, int span_steps,
                                              const GraspStackConfig& cfg) {
  for (const auto& node : leaf_nodes(cfg)) {
    if (node.id.str() != concept_name) continue;
    const Observation obs = apply_transformation(node.state_map, raw);
    auto fired = [&](TerminationKind kind) {
      for (const auto& t : node.terminal)
        if (t.kind == kind && holds(t, obs)) return true;
      return false;
    };
    if (fired(TerminationKind::Goal)) return TerminationKind::Goal;
    if (fired(TerminationKind::RegionExit) || !is_valid(node.validity, obs)) return TerminationKind::RegionExit;
    if (span_steps >= node.max_steps) return TerminationKind::StepBudget;
    return std::nullopt;
  }
  throw std::invalid_argument("unknown concept: " + concept_name);
}

std::shared_ptr<ControlPolicy> make_scripted_policy(const ConceptNode& node, const GraspStackConfig& cfg) {
  if (node.kind != ConceptKind::Control || node.policy.kind != "scripted") {
    throw std::invalid_argument(node.id.str() + " is not a scripted control concept");
  }
  return std::make_shared<ScriptedController>(node.policy.name, node.policy.params, node.action_map, cfg);
}

void bind_scripted(const ConceptNetwork& net, const GraspStackConfig& cfg, PolicyBindings& bindings) {
  for (const auto& node : net.nodes()) {
    if (node.kind == ConceptKind::Control && node.policy.kind == "scripted") {
      bindings.bind_control(node.id, make_scripted_policy(node, cfg));
    }
  }
}

std::optional<Task> training_task(const std::string& concept_name) {
  if (concept_name == "root") return Task::Full;
  if (concept_name == "staging1") return Task::Staging1;
  if (concept_name == "orient") return Task::Orient;
  if (concept_name == "lift") return Task::Lift;
  if (concept_name == "grasp") return Task::Grasp;
  if (concept_name == "staging2") return Task::Staging2;
  if (concept_name == "stack") return Task::Stack;
  return std::nullopt;
}

}  // namespace cnrl
