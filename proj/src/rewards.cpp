#include "cnrl/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnrl {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0)) {
    throw std::invalid_argument(std::string("reward parameter must be positive: ") + name);
  }
}

double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double RewardParams::max_shaping_total() const { return t_max * (w_theta + w_d + w_p + w_h); }

void RewardParams::validate() const {
  require_positive(alpha_angle, "alpha_angle");
  require_positive(alpha_height, "alpha_height");
  require_positive(alpha_pinch, "alpha_pinch");
  require_positive(d_max, "d_max");
  require_positive(p_max, "p_max");
  require_positive(h_max, "h_max");
  require_positive(t_max, "t_max");
  require_positive(eps_d, "eps_d");
  require_positive(eps_theta, "eps_theta");
  require_positive(eps_h, "eps_h");
  require_positive(eps_p, "eps_p");
  const double cap = max_shaping_total();
  if (!(b_orient > cap) || !(b_lift > cap) || !(b_stack > cap)) {
    throw std::invalid_argument(
        "every success bonus must exceed t_max * (w_theta + w_d + w_p + w_h)");
  }
}

RewardParams with_default_bonuses(RewardParams params) {
  const double bonus = 2.0 * params.max_shaping_total();
  params.b_orient = bonus;
  params.b_lift = bonus;
  params.b_stack = bonus;
  return params;
}

double angular_shaping(double theta_x, double theta_y, double theta_z, double alpha) {
  if (theta_x < 0.0 || theta_y < 0.0 || theta_z < 0.0) {
    throw std::invalid_argument("angular_shaping: negative angle");
  }
  const double base = clamp_unit(0.5 * (std::min(theta_x, theta_y) / 45.0 + theta_z / 90.0));
  return 1.0 - std::pow(base, alpha);
}

double aggregate_angle(double theta_x, double theta_y, double theta_z) {
  return 0.5 * (std::min(theta_x, theta_y) / 45.0 + theta_z / 90.0) * 90.0;
}

double distance_shaping(double d, double d_max, double alpha) {
  if (!(d_max > 0.0)) {
    throw std::invalid_argument("distance_shaping: d_max must be positive");
  }
  return 1.0 - std::pow(clamp_unit(d / d_max), alpha);
}

double pinch_shaping(double p, double p_max, double alpha) {
  if (!(p_max > 0.0)) {
    throw std::invalid_argument("pinch_shaping: p_max must be positive");
  }
  return 1.0 - std::pow(clamp_unit(p / p_max), alpha);
}

double height_shaping(double h, double h_max, double alpha) {
  if (!(h_max > 0.0)) {
    throw std::invalid_argument("height_shaping: h_max must be positive");
  }
  return std::pow(clamp_unit(h / h_max), alpha);
}

double time_decay(double t, double t_max) {
  if (!(t_max > 0.0)) {
    throw std::invalid_argument("time_decay: t_max must be positive");
  }
  if (t < 0.0 || t > t_max) {
    throw std::invalid_argument("time_decay: t outside [0, t_max]");
  }
  return 1.0 - t / t_max;
}

double orient_reward(double d_orient, const AngleTuple& theta, double t, const RewardParams& params) {
  const double decay = time_decay(t, params.t_max);
  const double theta_orient = aggregate_angle(theta.x, theta.y, theta.z);
  if (d_orient < params.eps_d && theta_orient < params.eps_theta) {
    return decay * params.b_orient;
  }
  const double r_theta = angular_shaping(theta.x, theta.y, theta.z, params.alpha_angle);
  const double r_d = distance_shaping(d_orient, params.d_max, params.alpha_angle);
  return decay * (params.w_theta * r_theta + params.w_d * r_d);
}

double lift_reward(double h, double p, double t, const RewardParams& params) {
  const double decay = time_decay(t, params.t_max);
  if (h > params.eps_h) {
    return decay * params.b_lift;
  }
  if (p > params.eps_p) {
    // The middle branch pays the bare pinch weight, not w_p * r_p.
    return decay * (params.w_p + params.w_h * height_shaping(h, params.h_max, params.alpha_height));
  }
  return decay * params.w_p * pinch_shaping(p, params.p_max, params.alpha_pinch);
}

double grasp_reward(double h, double d_orient, double theta_orient, const RewardParams& params) {
  if (h > params.eps_h) {
    return params.b_lift;
  }
  if (d_orient < params.eps_d && theta_orient < params.eps_theta) {
    return params.w_theta;
  }
  return 0.0;
}

double stack_reward(double d_stack, double theta_stack, const AngleTuple& theta, double d, double t,
                    const RewardParams& params) {
  const double decay = time_decay(t, params.t_max);
  if (d_stack < params.eps_d && theta_stack < params.eps_theta) {
    return decay * params.b_stack;
  }
  const double r_theta = angular_shaping(theta.x, theta.y, theta.z, params.alpha_angle);
  const double r_d = distance_shaping(d, params.d_max, params.alpha_angle);
  return decay * (params.w_theta * r_theta + params.w_d * r_d);
}

double full_task_reward(const StageFlags& flags, const RewardParams& params) {
  if (flags.stacked) return params.w_stack;
  if (flags.staged2) return params.w_stage2;
  if (flags.grasped) return params.w_grasp;
  if (flags.staged1) return params.w_stage1;
  return 0.0;
}

}  // namespace cnrl
