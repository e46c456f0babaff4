#pragma once

// Discrete-action Q-learning for selectors: replay memory, exploration
// schedule, tabular and network-backed Q-functions, semi-MDP TD targets, and
// the DQN update against a frozen target copy.

#include "cnrl/approximator.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace cnrl {

using Rng = std::mt19937_64;

struct Transition {
  Eigen::VectorXd s;
  int action = -1;                // discrete action, or -1
  Eigen::VectorXd action_vector;  // continuous action, when recorded
  double r = 0.0;
  bool tau = false;               // true terminal: no bootstrap from s_next
  Eigen::VectorXd s_next;
  int span_len = 1;               // primitive steps covered by this decision
};

/// FIFO ring of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50'000, std::size_t min_fill = 1'000);

  void push(Transition t);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t min_fill() const { return min_fill_; }
  bool ready() const { return entries_.size() >= min_fill_; }

  const Transition& operator[](std::size_t i) const { return entries_[i]; }
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<Transition> contents() const { return {entries_.begin(), entries_.end()}; }

 private:
  std::size_t capacity_;
  std::size_t min_fill_;
  std::deque<Transition> entries_;
};

/// Linear decay from `start` to `end` over `horizon` steps, then flat.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.02;
  long horizon = 10'000;

  double value(long t) const;
};

struct QLearnerConfig {
  double gamma = 0.98;
  double learning_rate = 5e-4;
  int batch_size = 64;
  int target_sync_interval = 250;
  std::size_t replay_capacity = 50'000;
  std::size_t min_fill = 1'000;
  EpsilonSchedule epsilon;
  std::vector<int> hidden = {64, 64};
  int updates_per_decision = 1;
  double reward_scale = 1.0;  // multiplies span rewards before they enter the replay buffer
  std::uint64_t seed = 0;

  void validate() const;
};

/// Exact table over integer states; the observation's first component is the state index.
struct TabularQ {
  Eigen::MatrixXd table;  // states x actions
  double step_size = 1.0;
};

/// MLP mapping observation to one value per action, with its own optimizer state.
struct NetworkQ {
  Mlpd net;
  AdamState<double> adam;
};

class QPolicy {
 public:
  QPolicy() = default;
  static QPolicy tabular(int states, int actions, double step_size = 1.0);
  static QPolicy network(int inputs, const std::vector<int>& hidden, int actions, double learning_rate,
                         std::uint64_t seed);
  static QPolicy from_mlp(Mlpd net, double learning_rate);

  bool is_tabular() const { return std::holds_alternative<TabularQ>(impl_); }
  int input_size() const;
  int num_actions() const;

  const TabularQ& as_tabular() const { return std::get<TabularQ>(impl_); }
  TabularQ& as_tabular() { return std::get<TabularQ>(impl_); }
  const NetworkQ& as_network() const { return std::get<NetworkQ>(impl_); }
  NetworkQ& as_network() { return std::get<NetworkQ>(impl_); }

  /// Parameter vector (table entries row-major, or the MLP flat layout).
  Eigen::VectorXd params() const;
  bool same_architecture(const QPolicy& other) const;

 private:
  std::variant<TabularQ, NetworkQ> impl_;
};

/// One finite value per action. Throws std::invalid_argument on arity mismatch
/// and std::domain_error on non-finite output.
Eigen::VectorXd q_values(const QPolicy& policy, const Eigen::VectorXd& obs);

/// Lowest index wins ties.
int greedy_action(const Eigen::VectorXd& q);

/// Uniform random action with probability eps, otherwise greedy.
int select_action(const QPolicy& policy, const Eigen::VectorXd& obs, double eps, Rng& rng);

/// r + gamma^span_len * max_a' Q_target(s', a'), without the bootstrap when tau.
double td_target(const Transition& item, const QPolicy& target, double gamma);

/// One gradient step on the mean squared TD error against the frozen target.
/// Returns the loss before the step.
double dqn_update(QPolicy& policy, const QPolicy& target, const std::vector<Transition>& batch,
                  const QLearnerConfig& cfg);

/// Copies parameters (not optimizer state) into the target.
void sync_target(const QPolicy& policy, QPolicy& target);

// Checkpoints: versioned JSON text with named layers, shapes, row-major values
// and a config echo.
std::string save_policy(const QPolicy& policy, const QLearnerConfig& cfg);
QPolicy load_policy(const std::string& text);
void save_policy_file(const std::string& path, const QPolicy& policy, const QLearnerConfig& cfg);
QPolicy load_policy_file(const std::string& path);

std::string save_mlp(const Mlpd& net, const std::string& kind, const std::vector<double>& output_bounds);
Mlpd load_mlp(const std::string& text, std::vector<double>* output_bounds = nullptr);

}  // namespace cnrl
