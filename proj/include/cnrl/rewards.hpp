#pragma once

// Shaping and staged rewards for the grasp-and-stack concepts. Everything here
// is a pure function of its arguments; the environment computes the geometric
// inputs (distances, folded angles, heights) and passes them in.

#include <string>

namespace cnrl {

struct RewardParams {
  double alpha_angle = 0.4;   // exponent for r_theta and r_d
  double alpha_height = 4.0;  // exponent for r_h
  double alpha_pinch = 0.4;   // exponent for r_p
  double d_max = 0.6;         // m
  double p_max = 0.10;        // m
  double h_max = 0.15;        // m
  double t_max = 50.0;        // steps in one concept episode

  double w_theta = 0.5;
  double w_d = 0.5;
  double w_p = 0.5;
  double w_h = 0.5;

  double b_orient = 200.0;
  double b_lift = 200.0;
  double b_stack = 200.0;

  double w_stage1 = 0.25;
  double w_grasp = 0.5;
  double w_stage2 = 0.75;
  double w_stack = 1.0;

  double eps_d = 0.01;      // m
  double eps_theta = 5.0;   // deg
  double eps_h = 0.12;      // m
  double eps_p = 0.035;     // m

  /// Throws std::invalid_argument naming the first violated constraint
  /// (positive exponents and tolerances, bonus dominance).
  void validate() const;

  /// t_max * (w_theta + w_d + w_p + w_h): the most shaping reward a concept
  /// could collect in one episode.
  double max_shaping_total() const;
};

/// Sets every bonus to 2 * t_max * (sum of shaping weights).
RewardParams with_default_bonuses(RewardParams params);

// Shaping components. Inputs outside their nominal range are clamped.
double angular_shaping(double theta_x, double theta_y, double theta_z, double alpha);
double distance_shaping(double d, double d_max, double alpha);
double pinch_shaping(double p, double p_max, double alpha);
double height_shaping(double h, double h_max, double alpha);
double time_decay(double t, double t_max);

/// Scalar angle (deg) used in the orient/stack success predicates: the
/// normalized angular base rescaled to degrees.
double aggregate_angle(double theta_x, double theta_y, double theta_z);

struct AngleTuple {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double orient_reward(double d_orient, const AngleTuple& theta, double t, const RewardParams& params);
double lift_reward(double h, double p, double t, const RewardParams& params);
double grasp_reward(double h, double d_orient, double theta_orient, const RewardParams& params);
double stack_reward(double d_stack, double theta_stack, const AngleTuple& theta, double d, double t,
                    const RewardParams& params);

/// Milestones for the full task, in precedence order.
struct StageFlags {
  bool stacked = false;
  bool staged2 = false;
  bool grasped = false;
  bool staged1 = false;
};

double full_task_reward(const StageFlags& flags, const RewardParams& params);

}  // namespace cnrl
