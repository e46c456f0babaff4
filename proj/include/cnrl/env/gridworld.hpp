#pragma once

// Deterministic grid for learner sanity checks: four moves, -1 per step,
// absorbing goal. Moving into a wall leaves the agent in place.

#include <Eigen/Core>

#include <utility>

namespace cnrl {

class GridWorld {
 public:
  enum Move { Up = 0, Down = 1, Left = 2, Right = 3 };
  static constexpr int kNumActions = 4;

  GridWorld(int width, int height, int goal_x, int goal_y);
  /// 1 x n corridor with the goal at the right end.
  static GridWorld chain(int n);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_states() const { return width_ * height_; }
  int goal() const { return goal_; }
  int index(int x, int y) const { return y * width_ + x; }
  bool is_goal(int s) const { return s == goal_; }

  /// Next state and reward; the goal is absorbing with reward 0.
  std::pair<int, double> transition(int s, int action) const;

  void reset(int s);
  int state() const { return state_; }
  double step(int action);
  bool done() const { return is_goal(state_); }
  /// The state index as a one-component observation.
  Eigen::VectorXd observation() const;

 private:
  int width_;
  int height_;
  int goal_;
  int state_ = 0;
};

}  // namespace cnrl
