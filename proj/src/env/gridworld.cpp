#include "cnrl/env/gridworld.hpp"

#include <stdexcept>

namespace cnrl {

GridWorld::GridWorld(int width, int height, int goal_x, int goal_y) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
  if (goal_x < 0 || goal_x >= width || goal_y < 0 || goal_y >= height) {
    throw std::invalid_argument("goal outside the grid");
  }
  goal_ = index(goal_x, goal_y);
}

GridWorld GridWorld::chain(int n) { return GridWorld(n, 1, n - 1, 0); }

std::pair<int, double> GridWorld::transition(int s, int action) const {
  if (s < 0 || s >= num_states()) throw std::out_of_range("grid state out of range");
  if (action < 0 || action >= kNumActions) throw std::out_of_range("grid action out of range");
  if (is_goal(s)) return {s, 0.0};
  int x = s % width_;
  int y = s / width_;
  switch (action) {
    case Up: y = y + 1 < height_ ? y + 1 : y; break;
    case Down: y = y > 0 ? y - 1 : y; break;
    case Left: x = x > 0 ? x - 1 : x; break;
    case Right: x = x + 1 < width_ ? x + 1 : x; break;
  }
  return {index(x, y), -1.0};
}

void GridWorld::reset(int s) {
  if (s < 0 || s >= num_states()) throw std::out_of_range("grid state out of range");
  state_ = s;
}

double GridWorld::step(int action) {
  const auto [next, r] = transition(state_, action);
  state_ = next;
  return r;
}

Eigen::VectorXd GridWorld::observation() const { return Eigen::VectorXd::Constant(1, state_); }

}  // namespace cnrl
