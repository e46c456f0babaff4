#include "cnrl/env/scripted.hpp"

#include <algorithm>
#include <stdexcept>

namespace cnrl {

namespace {

double clampv(double x, double limit) { return std::clamp(x, -limit, limit); }

Eigen::VectorXd command(const GraspStackConfig& cfg, double vx, double vy, double vz, double yaw_rate,
                        double finger_rate) {
  Eigen::VectorXd a(GraspStackEnv::kActionSize);
  a << clampv(vx, cfg.v_max), clampv(vy, cfg.v_max), clampv(vz, cfg.v_max), clampv(yaw_rate, cfg.yaw_rate_max),
      clampv(finger_rate, cfg.finger_rate_max);
  return a;
}

}  // namespace

const std::vector<std::string>& scripted_controller_names() {
  static const std::vector<std::string> names = {"staging1", "orient", "lift",           "staging2",
                                                 "stack",    "zero",   "translate_servo"};
  return names;
}

Eigen::VectorXd scripted_action(const std::string& name, const Observation& obs, const std::vector<double>& params,
                                const GraspStackConfig& cfg, const ServoGains& g) {
  const double open = cfg.finger_rate_max;
  const double close = -cfg.finger_rate_max;
  if (name == "staging1") {
    return command(cfg, g.k * obs["stage1_dx"], g.k * obs["stage1_dy"], g.k * obs["stage1_dz"],
                   -g.k_yaw * obs["orient_yaw_error"], open);
  }
  if (name == "orient") {
    return command(cfg, g.k * obs["grasp_dx"], g.k * obs["grasp_dy"], g.k * obs["grasp_dz"],
                   -g.k_yaw * obs["orient_yaw_error"], open);
  }
  if (name == "lift") {
    if (obs["held"] < 0.5) {
      return command(cfg, g.k * obs["grasp_dx"], g.k * obs["grasp_dy"], g.k * obs["grasp_dz"], 0.0, close);
    }
    return command(cfg, -g.k * obs["drift_dx"], -g.k * obs["drift_dy"], cfg.v_max, 0.0, close);
  }
  if (name == "staging2") {
    return command(cfg, g.k * obs["stage2_dx"], g.k * obs["stage2_dy"], g.k * obs["stage2_dz"],
                   -g.k_yaw * obs["stack_yaw_error"], close);
  }
  if (name == "stack") {
    return command(cfg, g.k * obs["stack_dx"], g.k * obs["stack_dy"], g.k * obs["stack_dz"],
                   -g.k_yaw * obs["stack_yaw_error"], close);
  }
  if (name == "zero") return Eigen::VectorXd::Zero(GraspStackEnv::kActionSize);
  if (name == "translate_servo") {
    if (params.size() != 3) throw std::invalid_argument("translate_servo needs three velocity parameters");
    const double yaw_error = obs["held"] > 0.5 ? obs["stack_yaw_error"] : obs["orient_yaw_error"];
    return command(cfg, params[0], params[1], params[2], -g.k_yaw * yaw_error, close);
  }
  throw std::invalid_argument("unknown scripted controller: " + name);
}

ScriptedController::ScriptedController(std::string name, std::vector<double> params, ActionSpec action_map,
                                       GraspStackConfig cfg, ServoGains gains)
    : name_(std::move(name)),
      params_(std::move(params)),
      action_map_(std::move(action_map)),
      cfg_(std::move(cfg)),
      gains_(gains) {
  const auto& names = scripted_controller_names();
  if (std::find(names.begin(), names.end(), name_) == names.end()) {
    throw std::invalid_argument("unknown scripted controller: " + name_);
  }
}

Eigen::VectorXd ScriptedController::act(const Observation& obs) {
  const Eigen::VectorXd full = scripted_action(name_, obs, params_, cfg_, gains_);
  if (action_map_.is_identity()) return full;
  Eigen::VectorXd partial(action_map_.partial_size());
  for (int i = 0; i < action_map_.partial_size(); ++i) partial[i] = full[action_map_.learned[static_cast<std::size_t>(i)]];
  return partial;
}

}  // namespace cnrl
