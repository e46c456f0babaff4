#include "cnrl/env/grasp_stack.hpp"

#include "cnrl/env/scripted.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cnrl {

namespace {

// Schema order; kFeatureNames must list the same names in the same order.
enum F : Eigen::Index {
  pinch_x, pinch_y, pinch_z, pinch_yaw, finger_sep,
  prism_x, prism_y, prism_z, prism_yaw,
  cube_x, cube_y, cube_z, cube_yaw,
  prism_start_x, prism_start_y, held, t,
  grasp_dx, grasp_dy, grasp_dz, grasp_dist,
  pinch_prism_dx, pinch_prism_dy, pinch_prism_dz, pinch_prism_dist,
  drift_dx, drift_dy, drift_xy, prism_height,
  stack_dx, stack_dy, stack_dz, stack_dist, stack_xy_dist,
  orient_theta_x, orient_theta_y, orient_theta_z, orient_angle, orient_yaw_error, orient_yaw_norm,
  stack_theta_x, stack_theta_y, stack_theta_z, stack_angle, stack_yaw_error,
  stage1_dx, stage1_dy, stage1_dz, stage1_dist,
  stage2_dx, stage2_dy, stage2_dz, stage2_dist,
  kFeatureCount
};

const std::vector<std::string> kFeatureNames = {
    "pinch_x", "pinch_y", "pinch_z", "pinch_yaw", "finger_sep",
    "prism_x", "prism_y", "prism_z", "prism_yaw",
    "cube_x", "cube_y", "cube_z", "cube_yaw",
    "prism_start_x", "prism_start_y", "held", "t",
    "grasp_dx", "grasp_dy", "grasp_dz", "grasp_dist",
    "pinch_prism_dx", "pinch_prism_dy", "pinch_prism_dz", "pinch_prism_dist",
    "drift_dx", "drift_dy", "drift_xy", "prism_height",
    "stack_dx", "stack_dy", "stack_dz", "stack_dist", "stack_xy_dist",
    "orient_theta_x", "orient_theta_y", "orient_theta_z", "orient_angle", "orient_yaw_error", "orient_yaw_norm",
    "stack_theta_x", "stack_theta_y", "stack_theta_z", "stack_angle", "stack_yaw_error",
    "stage1_dx", "stage1_dy", "stage1_dz", "stage1_dist",
    "stage2_dx", "stage2_dy", "stage2_dz", "stage2_dist",
};

double wrap_deg(double a) {
  if (a >= -180.0 && a < 180.0) return a;
  a = std::fmod(a + 180.0, 360.0);
  if (a < 0.0) a += 360.0;
  return a - 180.0;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("grasp-stack config: ") + what);
}

}  // namespace

void GraspStackConfig::validate() const {
  require(dt > 0.0, "dt must be positive");
  require(step_cap > 0 && sub_step_cap > 0, "step caps must be positive");
  require(sub_step_cap <= kSubConceptStepCap, "sub-concept cap exceeds 50");
  require(jitter_xy >= 0.0 && jitter_yaw >= 0.0, "jitter must be non-negative");
  require(gripper_jitter_xy >= 0.0 && gripper_jitter_z >= 0.0 && gripper_jitter_yaw >= 0.0,
          "gripper jitter must be non-negative");
  require(table_half_extent > 0.0 && z_max > 0.0, "workspace must be non-empty");
  require(prism_half_width > 0.0 && prism_half_height > 0.0 && cube_size > 0.0, "object sizes must be positive");
  require(grasp_offset >= 0.0 && r_cyl > 0.0 && orient_radius > 0.0 && staging_height > 0.0,
          "geometry lengths must be positive");
  require(v_max > 0.0 && yaw_rate_max > 0.0 && finger_rate_max > 0.0, "command limits must be positive");
  rewards.validate();
}

const char* to_string(Task task) {
  switch (task) {
    case Task::Full: return "full";
    case Task::Staging1: return "staging1";
    case Task::Orient: return "orient";
    case Task::Lift: return "lift";
    case Task::Grasp: return "grasp";
    case Task::Staging2: return "staging2";
    case Task::Stack: return "stack";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  for (Task t : {Task::Full, Task::Staging1, Task::Orient, Task::Lift, Task::Grasp, Task::Staging2, Task::Stack}) {
    if (s == to_string(t)) return t;
  }
  throw std::invalid_argument("unknown task: " + s);
}

double fold_signed(double angle_deg) { return angle_deg - 90.0 * std::round(angle_deg / 90.0); }

double fold_misalignment(double angle_deg) {
  double d = std::fmod(angle_deg, 90.0);
  if (d < 0.0) d += 90.0;
  return std::min(d, 90.0 - d);
}

Eigen::Vector3d grasp_point(const GraspStackState& s, const GraspStackConfig& cfg) {
  return s.prism + Eigen::Vector3d(0.0, 0.0, cfg.prism_half_height + cfg.grasp_offset);
}

const SchemaPtr& grasp_stack_schema() {
  static const SchemaPtr schema = std::make_shared<const FeatureSchema>(kFeatureNames);
  return schema;
}

Eigen::VectorXd derive_features(const GraspStackState& s, const GraspStackConfig& cfg) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(kFeatureCount));
  f[pinch_x] = s.pinch.x();
  f[pinch_y] = s.pinch.y();
  f[pinch_z] = s.pinch.z();
  f[pinch_yaw] = s.pinch_yaw;
  f[finger_sep] = s.finger_sep;
  f[prism_x] = s.prism.x();
  f[prism_y] = s.prism.y();
  f[prism_z] = s.prism.z();
  f[prism_yaw] = s.prism_yaw;
  f[cube_x] = s.cube.x();
  f[cube_y] = s.cube.y();
  f[cube_z] = s.cube.z();
  f[cube_yaw] = s.cube_yaw;
  f[prism_start_x] = s.prism_start.x();
  f[prism_start_y] = s.prism_start.y();
  f[held] = s.held ? 1.0 : 0.0;
  f[t] = s.t;

  const Eigen::Vector3d grasp = grasp_point(s, cfg) - s.pinch;
  f.segment<3>(grasp_dx) = grasp;
  f[grasp_dist] = grasp.norm();

  const Eigen::Vector3d to_prism = s.prism - s.pinch;
  f.segment<3>(pinch_prism_dx) = to_prism;
  f[pinch_prism_dist] = to_prism.norm();

  const Eigen::Vector2d drift = s.prism.head<2>() - s.prism_start;
  f[drift_dx] = drift.x();
  f[drift_dy] = drift.y();
  f[drift_xy] = drift.norm();
  const double bottom = s.prism.z() - cfg.prism_half_height;
  f[prism_height] = bottom;

  const Eigen::Vector3d stack(s.cube.x() - s.prism.x(), s.cube.y() - s.prism.y(), s.cube.z() + cfg.cube_size - bottom);
  f.segment<3>(stack_dx) = stack;
  f[stack_dist] = stack.norm();
  f[stack_xy_dist] = stack.head<2>().norm();

  const double orient_err = fold_signed(s.pinch_yaw - s.prism_yaw);
  const double orient_fold = std::abs(orient_err);
  f[orient_theta_x] = orient_fold;
  f[orient_theta_y] = orient_fold;
  f[orient_theta_z] = 0.0;
  f[orient_angle] = aggregate_angle(orient_fold, orient_fold, 0.0);
  f[orient_yaw_error] = orient_err;
  f[orient_yaw_norm] = orient_err / 90.0;

  const double stack_err = fold_signed(s.prism_yaw - s.cube_yaw);
  const double stack_fold = std::abs(stack_err);
  f[stack_theta_x] = stack_fold;
  f[stack_theta_y] = stack_fold;
  f[stack_theta_z] = 0.0;
  f[stack_angle] = aggregate_angle(stack_fold, stack_fold, 0.0);
  f[stack_yaw_error] = stack_err;

  const Eigen::Vector3d stage1 = grasp_point(s, cfg) + Eigen::Vector3d(0.0, 0.0, cfg.staging_height) - s.pinch;
  f.segment<3>(stage1_dx) = stage1;
  f[stage1_dist] = stage1.norm();

  // Where the prism bottom is, or would be if the prism hung from the pinch point.
  const Eigen::Vector3d carried =
      s.held ? Eigen::Vector3d(s.prism.x(), s.prism.y(), bottom)
             : s.pinch - Eigen::Vector3d(0.0, 0.0, 2.0 * cfg.prism_half_height + cfg.grasp_offset);
  const Eigen::Vector3d stage2 =
      Eigen::Vector3d(s.cube.x(), s.cube.y(), s.cube.z() + cfg.cube_size + cfg.staging_height) - carried;
  f.segment<3>(stage2_dx) = stage2;
  f[stage2_dist] = stage2.norm();
  return f;
}

GraspStackState sample_reset(const GraspStackConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

  GraspStackState s;
  const double pdx = u(rng), pdy = u(rng), pyaw = u(rng);
  const double cdx = u(rng), cdy = u(rng), cyaw = u(rng);
  const double gdx = u(rng), gdy = u(rng), gdz = u(rng), gyaw = u(rng);

  s.prism = Eigen::Vector3d(cfg.prism_xy.x() + cfg.jitter_xy * pdx, cfg.prism_xy.y() + cfg.jitter_xy * pdy,
                            cfg.prism_half_height);
  s.prism_yaw = cfg.jitter_yaw * pyaw * kRadToDeg;
  s.prism_start = s.prism.head<2>();
  s.cube = Eigen::Vector3d(cfg.cube_xy.x() + cfg.jitter_xy * cdx, cfg.cube_xy.y() + cfg.jitter_xy * cdy, 0.0);
  s.cube_yaw = cfg.jitter_yaw * cyaw * kRadToDeg;
  s.pinch = cfg.gripper_start + Eigen::Vector3d(cfg.gripper_jitter_xy * gdx, cfg.gripper_jitter_xy * gdy,
                                                cfg.gripper_jitter_z * gdz);
  s.pinch_yaw = cfg.gripper_jitter_yaw * gyaw;
  s.finger_sep = cfg.rewards.p_max;
  s.held = false;
  s.t = 0;
  return s;
}

void integrate(GraspStackState& s, const Eigen::VectorXd& action, const GraspStackConfig& cfg) {
  if (action.size() != GraspStackEnv::kActionSize) {
    throw std::invalid_argument("grasp-stack action must have 5 components");
  }
  if (!action.allFinite()) throw std::domain_error("grasp-stack action is not finite");
  const Eigen::Vector3d v = action.head<3>().cwiseMax(-cfg.v_max).cwiseMin(cfg.v_max);
  const double yaw_rate = std::clamp(action[3], -cfg.yaw_rate_max, cfg.yaw_rate_max);
  const double finger_rate = std::clamp(action[4], -cfg.finger_rate_max, cfg.finger_rate_max);
  const RewardParams& rp = cfg.rewards;

  s.pinch += v * cfg.dt;
  const double h = cfg.table_half_extent;
  s.pinch.x() = std::clamp(s.pinch.x(), -h, h);
  s.pinch.y() = std::clamp(s.pinch.y(), -h, h);
  const double z_floor = s.held ? std::max(0.0, cfg.prism_half_height - s.held_offset.z()) : 0.0;
  s.pinch.z() = std::clamp(s.pinch.z(), z_floor, cfg.z_max);
  s.pinch_yaw = wrap_deg(s.pinch_yaw + yaw_rate * cfg.dt);
  s.finger_sep = std::clamp(s.finger_sep + finger_rate * cfg.dt, 0.0, rp.p_max);

  if (s.held) {
    s.prism = s.pinch + s.held_offset;
    s.prism_yaw = wrap_deg(s.prism_yaw + yaw_rate * cfg.dt);
    if (s.finger_sep > rp.eps_p) {
      s.held = false;
      s.held_offset.setZero();
      const Eigen::Vector2d rel = s.prism.head<2>() - s.cube.head<2>();
      const double c = std::cos(-s.cube_yaw * 3.14159265358979323846 / 180.0);
      const double sn = std::sin(-s.cube_yaw * 3.14159265358979323846 / 180.0);
      const double lx = c * rel.x() - sn * rel.y();
      const double ly = sn * rel.x() + c * rel.y();
      const double half = 0.5 * cfg.cube_size;
      const bool on_cube = std::abs(lx) <= half && std::abs(ly) <= half;
      s.prism.z() = (on_cube ? s.cube.z() + cfg.cube_size : 0.0) + cfg.prism_half_height;
    }
  } else {
    const double misalignment = fold_misalignment(s.pinch_yaw - s.prism_yaw);
    if (s.finger_sep < rp.eps_p && (s.pinch - grasp_point(s, cfg)).norm() < rp.eps_d &&
        aggregate_angle(misalignment, misalignment, 0.0) < rp.eps_theta) {
      s.held = true;
      s.held_offset = s.prism - s.pinch;
    }
  }
  ++s.t;
}

StageFlags stage_flags(const Eigen::VectorXd& f, const RewardParams& p) {
  StageFlags flags;
  const bool is_held = f[held] > 0.5;
  flags.stacked = f[stack_dist] < p.eps_d && f[stack_angle] < p.eps_theta;
  flags.staged2 = is_held && f[stage2_dist] < p.eps_d;
  flags.grasped = is_held && f[prism_height] > p.eps_h;
  flags.staged1 = !is_held && f[stage1_dist] < p.eps_d;
  return flags;
}

GraspStackEnv::GraspStackEnv(GraspStackConfig cfg, Task task) : cfg_(std::move(cfg)), task_(task) {
  cfg_.validate();
  reset(0);
}

void GraspStackEnv::refresh() { features_ = derive_features(state_, cfg_); }

void GraspStackEnv::set_state(const GraspStackState& state) {
  state_ = state;
  state_.t = 0;
  refresh();
  reached_ = stage_flags(features_, cfg_.rewards);
  fresh_ = StageFlags{};
}

void GraspStackEnv::reset(std::uint64_t seed) {
  state_ = sample_reset(cfg_, seed);
  refresh();

  // Scripted prefix: drive through the stages that precede this task.
  std::vector<std::pair<const char*, Task>> prefix;
  switch (task_) {
    case Task::Full:
    case Task::Staging1: break;
    case Task::Stack: prefix.insert(prefix.begin(), {"staging2", Task::Staging2}); [[fallthrough]];
    case Task::Staging2: prefix.insert(prefix.begin(), {"lift", Task::Lift}); [[fallthrough]];
    case Task::Lift: prefix.insert(prefix.begin(), {"orient", Task::Orient}); [[fallthrough]];
    case Task::Orient:
    case Task::Grasp: prefix.insert(prefix.begin(), {"staging1", Task::Staging1}); break;
  }
  for (const auto& [controller, goal] : prefix) {
    for (int k = 0; k < cfg_.sub_step_cap && !succeeded(goal); ++k) {
      integrate(state_, scripted_action(controller, features(), {}, cfg_), cfg_);
      refresh();
    }
  }
  set_state(state_);
}

void GraspStackEnv::step(const Eigen::VectorXd& action) {
  integrate(state_, action, cfg_);
  refresh();
  const StageFlags now = stage_flags(features_, cfg_.rewards);
  fresh_.stacked = now.stacked && !reached_.stacked;
  fresh_.staged2 = now.staged2 && !reached_.staged2;
  fresh_.grasped = now.grasped && !reached_.grasped;
  fresh_.staged1 = now.staged1 && !reached_.staged1;
  reached_.stacked |= now.stacked;
  reached_.staged2 |= now.staged2;
  reached_.grasped |= now.grasped;
  reached_.staged1 |= now.staged1;
}

double GraspStackEnv::reward(std::string_view id, int local_step) const {
  const RewardParams& p = cfg_.rewards;
  const Eigen::VectorXd& f = features_;
  const double tt = std::clamp(static_cast<double>(local_step), 0.0, p.t_max);
  if (id.empty() || id == "none") return 0.0;
  if (id == "full") return full_task_reward(fresh_, p);
  if (id == "orient") {
    const double a = f[orient_theta_x];
    return orient_reward(f[grasp_dist], {a, a, 0.0}, tt, p);
  }
  if (id == "lift") return lift_reward(f[prism_height], f[finger_sep], tt, p);
  if (id == "grasp") return grasp_reward(f[prism_height], f[grasp_dist], f[orient_angle], p);
  if (id == "stack") {
    const double a = f[stack_theta_x];
    return stack_reward(f[stack_dist], f[stack_angle], {a, a, 0.0}, f[stack_dist], tt, p);
  }
  throw std::invalid_argument("unknown reward id: " + std::string(id));
}

bool GraspStackEnv::succeeded(Task task) const {
  const RewardParams& p = cfg_.rewards;
  const Eigen::VectorXd& f = features_;
  const bool is_held = f[held] > 0.5;
  switch (task) {
    case Task::Staging1: return f[stage1_dist] < p.eps_d;
    case Task::Orient: return f[grasp_dist] < p.eps_d && f[orient_angle] < p.eps_theta;
    case Task::Lift:
    case Task::Grasp: return is_held && f[prism_height] > p.eps_h;
    case Task::Staging2: return is_held && f[stage2_dist] < p.eps_d;
    case Task::Full:
    case Task::Stack: return f[stack_dist] < p.eps_d && f[stack_angle] < p.eps_theta;
  }
  return false;
}

bool GraspStackEnv::task_success() const { return succeeded(task_); }

}  // namespace cnrl
