#pragma once

// Hand-coded proportional controllers for the grasp-and-stack concepts. They
// read named features, so they work on any observation that carries them.

#include "cnrl/env/grasp_stack.hpp"
#include "cnrl/execution.hpp"

#include <string>
#include <vector>

namespace cnrl {

struct ServoGains {
  double k = 10.0;      // 1/s, translation
  double k_yaw = 10.0;  // 1/s, yaw
};

/// Names accepted by scripted_action.
const std::vector<std::string>& scripted_controller_names();

/// Full five-component command of the named controller. `params` is used by
/// "translate_servo" (vx, vy, vz). Throws std::invalid_argument for unknown names.
Eigen::VectorXd scripted_action(const std::string& name, const Observation& obs, const std::vector<double>& params,
                                const GraspStackConfig& cfg, const ServoGains& gains = {});

/// A scripted controller bound to a concept: emits the learned components of
/// its action map (all five for an identity map).
class ScriptedController : public ControlPolicy {
 public:
  ScriptedController(std::string name, std::vector<double> params, ActionSpec action_map, GraspStackConfig cfg,
                     ServoGains gains = {});

  Eigen::VectorXd act(const Observation& obs) override;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<double> params_;
  ActionSpec action_map_;
  GraspStackConfig cfg_;
  ServoGains gains_;
};

}  // namespace cnrl
