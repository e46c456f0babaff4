#pragma once

// Kinematic grasp-and-stack benchmark. A free-floating parallel gripper with
// Cartesian velocity, yaw-rate and finger-rate commands picks a square prism
// off the table and stacks it on a cube. Poses are yaw-only; grasping is a
// latch, not a contact model.

#include "cnrl/execution.hpp"
#include "cnrl/rewards.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>

namespace cnrl {

struct GraspStackConfig {
  double dt = 0.05;  // s
  int step_cap = kGlobalStepCap;
  int sub_step_cap = kSubConceptStepCap;

  double jitter_xy = 0.10;           // m, objects
  double jitter_yaw = 1.0;           // rad, objects
  double gripper_jitter_xy = 0.01;   // m
  double gripper_jitter_z = 0.01;    // m
  double gripper_jitter_yaw = 5.0;   // deg

  double table_half_extent = 0.5;  // m, table is [-h, h]^2
  double z_max = 0.6;              // m
  double prism_half_width = 0.02;
  double prism_half_height = 0.04;
  double cube_size = 0.05;
  double grasp_offset = 0.015;     // grasp point height above the prism top
  double r_cyl = 0.05;             // lift drift cylinder radius
  double orient_radius = 0.15;     // orient validity radius around the grasp point
  double staging_height = 0.10;    // waypoint height above the grasp point / cube top

  double v_max = 0.25;             // m/s per axis
  double yaw_rate_max = 90.0;      // deg/s
  double finger_rate_max = 0.2;    // m/s

  Eigen::Vector2d prism_xy{-0.15, 0.0};
  Eigen::Vector2d cube_xy{0.15, 0.0};
  Eigen::Vector3d gripper_start{0.0, 0.0, 0.30};

  RewardParams rewards;

  /// Throws std::invalid_argument on non-positive caps or sizes, negative jitter,
  /// or invalid reward parameters.
  void validate() const;
};

struct GraspStackState {
  Eigen::Vector3d pinch = Eigen::Vector3d::Zero();
  double pinch_yaw = 0.0;  // deg
  double finger_sep = 0.0;
  Eigen::Vector3d prism = Eigen::Vector3d::Zero();  // center
  double prism_yaw = 0.0;                            // deg
  Eigen::Vector2d prism_start = Eigen::Vector2d::Zero();
  Eigen::Vector3d cube = Eigen::Vector3d::Zero();  // base center, z = 0
  double cube_yaw = 0.0;                            // deg
  bool held = false;
  Eigen::Vector3d held_offset = Eigen::Vector3d::Zero();  // prism - pinch while held
  int t = 0;
};

/// Which part of the full task an episode covers. Sub-tasks start from the
/// state the scripted controllers reach at the end of the preceding stages.
enum class Task { Full, Staging1, Orient, Lift, Grasp, Staging2, Stack };

const char* to_string(Task task);
Task task_from_string(const std::string& s);

/// Signed difference folded to the nearest multiple of 90 deg, in [-45, 45].
double fold_signed(double angle_deg);
/// Unsigned misalignment under the prism's 90 deg symmetry, in [0, 45].
double fold_misalignment(double angle_deg);

/// Grasp target: 1.5 cm (grasp_offset) above the prism top.
Eigen::Vector3d grasp_point(const GraspStackState& s, const GraspStackConfig& cfg);

/// Every feature a concept may observe, in schema order.
Eigen::VectorXd derive_features(const GraspStackState& s, const GraspStackConfig& cfg);
const SchemaPtr& grasp_stack_schema();

/// Objects on the table with uniform jitter, gripper open above the workspace.
GraspStackState sample_reset(const GraspStackConfig& cfg, std::uint64_t seed);

/// One Euler step with clamped commands, grasp latch and release.
/// Throws std::domain_error on a non-finite action.
void integrate(GraspStackState& s, const Eigen::VectorXd& action, const GraspStackConfig& cfg);

/// Milestones of the full task at one state.
StageFlags stage_flags(const Eigen::VectorXd& features, const RewardParams& params);

class GraspStackEnv : public Environment {
 public:
  static constexpr Eigen::Index kActionSize = 5;  // vx, vy, vz, yaw_rate, finger_rate

  explicit GraspStackEnv(GraspStackConfig cfg = {}, Task task = Task::Full);

  const GraspStackConfig& config() const { return cfg_; }
  Task task() const { return task_; }
  int episode_cap() const { return task_ == Task::Full ? cfg_.step_cap : cfg_.sub_step_cap; }

  void reset(std::uint64_t seed) override;
  /// Starts from an explicit state with t = 0; milestones it already satisfies count as reached.
  void set_state(const GraspStackState& state);
  const GraspStackState& state() const { return state_; }

  SchemaPtr schema() const override { return grasp_stack_schema(); }
  Features features() const override { return {grasp_stack_schema(), features_}; }
  const Eigen::VectorXd& feature_values() const { return features_; }
  Eigen::Index action_size() const override { return kActionSize; }
  void step(const Eigen::VectorXd& action) override;
  /// Reward ids: "full", "orient", "lift", "grasp", "stack", and "" or "none" for zero.
  double reward(std::string_view reward_id, int local_step) const override;
  bool task_success() const override;

  /// Success predicate of `task` at the current state.
  bool succeeded(Task task) const;

 private:
  void refresh();

  GraspStackConfig cfg_;
  Task task_;
  GraspStackState state_;
  Eigen::VectorXd features_;
  StageFlags reached_;
  StageFlags fresh_;
};

}  // namespace cnrl
