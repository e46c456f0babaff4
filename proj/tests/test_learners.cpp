#include "cnrl/env/gridworld.hpp"
#include "cnrl/execution.hpp"
#include "cnrl/learners.hpp"
#include "cnrl/selector_training.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <limits>
#include <map>

using namespace cnrl;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Transition item(Eigen::VectorXd s, int a, double r, bool tau, Eigen::VectorXd s_next, int span = 1) {
  Transition t;
  t.s = std::move(s);
  t.action = a;
  t.r = r;
  t.tau = tau;
  t.s_next = std::move(s_next);
  t.span_len = span;
  return t;
}

// Value iteration with gamma = 1 on a deterministic grid; Q*(s, a) = r + V*(s').
Eigen::MatrixXd value_iteration(const GridWorld& g) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(g.num_states());
  for (int sweep = 0; sweep < 1000; ++sweep) {
    Eigen::VectorXd next = v;
    for (int s = 0; s < g.num_states(); ++s) {
      if (g.is_goal(s)) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < GridWorld::kNumActions; ++a) {
        const auto [sn, r] = g.transition(s, a);
        best = std::max(best, r + v[sn]);
      }
      next[s] = best;
    }
    if (next == v) break;
    v = next;
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(g.num_states(), GridWorld::kNumActions);
  for (int s = 0; s < g.num_states(); ++s) {
    if (g.is_goal(s)) continue;
    for (int a = 0; a < GridWorld::kNumActions; ++a) {
      const auto [sn, r] = g.transition(s, a);
      q(s, a) = r + v[sn];
    }
  }
  return q;
}

// Tabular Q-learning fed by an epsilon-greedy walk; every update uses the full
// buffer as its batch and the target is synced after each update.
QPolicy learn_tabular(GridWorld g, int episodes, std::uint64_t seed) {
  QPolicy q = QPolicy::tabular(g.num_states(), GridWorld::kNumActions);
  QPolicy target = q;
  ReplayBuffer buffer(100'000, 1);
  QLearnerConfig cfg;
  cfg.gamma = 1.0;
  Rng rng(seed);
  std::uniform_int_distribution<int> start(0, g.num_states() - 1);
  for (int ep = 0; ep < episodes; ++ep) {
    int s0 = start(rng);
    while (g.is_goal(s0)) s0 = start(rng);
    g.reset(s0);
    for (int t = 0; t < 200 && !g.done(); ++t) {
      const Eigen::VectorXd obs = g.observation();
      const int a = select_action(q, obs, 0.5, rng);
      const double r = g.step(a);
      buffer.push(item(obs, a, r, g.done(), g.observation()));
    }
    dqn_update(q, target, buffer.contents(), cfg);
    sync_target(q, target);
  }
  for (int sweep = 0; sweep < 100; ++sweep) {
    dqn_update(q, target, buffer.contents(), cfg);
    sync_target(q, target);
  }
  return q;
}

void check_matches_oracle(const GridWorld& g, const QPolicy& q) {
  const Eigen::MatrixXd oracle = value_iteration(g);
  const Eigen::MatrixXd& table = q.as_tabular().table;
  CHECK((table - oracle).cwiseAbs().maxCoeff() < 1e-3);
  for (int s = 0; s < g.num_states(); ++s) {
    if (g.is_goal(s)) continue;
    CHECK(greedy_action(table.row(s).transpose()) == greedy_action(oracle.row(s).transpose()));
  }
}

}  // namespace

TEST_SUITE("replay buffer") {
  TEST_CASE("FIFO keeps the most recent capacity items in order") {
    ReplayBuffer buf(10, 1);
    for (int i = 0; i < 17; ++i) buf.push(item(vec({double(i)}), 0, 0, false, vec({0})));
    REQUIRE(buf.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(buf[i].s[0] == double(i + 7));
  }

  TEST_CASE("sampling is uniform") {
    ReplayBuffer buf(100, 1);
    for (int i = 0; i < 100; ++i) buf.push(item(vec({double(i)}), 0, 0, false, vec({0})));
    Rng rng(1);
    std::vector<int> counts(100, 0);
    for (auto i : buf.sample_indices(100'000, rng)) counts[i]++;
    for (int c : counts) {
      CHECK(c >= 850);
      CHECK(c <= 1150);
    }
  }

  TEST_CASE("ready after min_fill") {
    ReplayBuffer buf(10, 3);
    buf.push(item(vec({0}), 0, 0, false, vec({0})));
    buf.push(item(vec({0}), 0, 0, false, vec({0})));
    CHECK_FALSE(buf.ready());
    buf.push(item(vec({0}), 0, 0, false, vec({0})));
    CHECK(buf.ready());
  }
}

TEST_SUITE("exploration") {
  TEST_CASE("epsilon schedule") {
    EpsilonSchedule e;
    CHECK(std::abs(e.value(5000) - 0.51) < 1e-12);
    CHECK(e.value(0) == 1.0);
    CHECK(e.value(10'000) == 0.02);
    CHECK(e.value(1'000'000) == 0.02);
    for (long t = 0; t < 12'000; t += 7) CHECK(e.value(t + 7) <= e.value(t));
  }

  TEST_CASE("select_action examples") {
    QPolicy q = QPolicy::tabular(1, 3);
    Rng rng(0);
    q.as_tabular().table.row(0) << 0.1, 0.9, 0.3;
    CHECK(select_action(q, vec({0}), 0.0, rng) == 1);
    q.as_tabular().table.row(0) << 0.5, 0.5, 0.2;
    CHECK(select_action(q, vec({0}), 0.0, rng) == 0);
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30'000; ++i) counts[select_action(q, vec({0}), 1.0, rng)]++;
    for (int c : counts) CHECK(std::abs(c / 30'000.0 - 1.0 / 3.0) < 0.02);
  }
}

TEST_SUITE("q functions") {
  TEST_CASE("zero tabular policy gives zero values") {
    const QPolicy q = QPolicy::tabular(4, 3);
    CHECK(q_values(q, vec({2})).isZero(0.0));
  }

  TEST_CASE("network values match a hand-rolled forward pass") {
    Mlpd net({1, 2, 2});
    net.weight(0) << 1.0, -0.5;
    net.bias(0) << 0.0, 0.25;
    net.weight(1) << 1.0, 0.0, 0.3, 2.0;
    net.bias(1) << 0.0, -1.0;
    const QPolicy q = QPolicy::from_mlp(net, 1e-3);
    const double x = 0.8;
    const double h0 = std::tanh(x), h1 = std::tanh(-0.5 * x + 0.25);
    const Eigen::VectorXd v = q_values(q, vec({x}));
    CHECK(std::abs(v[0] - h0) < 1e-12);
    CHECK(std::abs(v[1] - (0.3 * h0 + 2.0 * h1 - 1.0)) < 1e-12);
  }

  TEST_CASE("wrong arity is rejected") {
    const QPolicy q = QPolicy::network(3, {8}, 2, 1e-3, 0);
    CHECK_THROWS_AS(q_values(q, vec({1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(q_values(QPolicy::tabular(3, 2), vec({1, 2})), std::invalid_argument);
  }
}

TEST_SUITE("updates") {
  TEST_CASE("td_target examples") {
    QPolicy target = QPolicy::tabular(2, 2);
    target.as_tabular().table.row(1) << 2.0, -1.0;
    CHECK(td_target(item(vec({0}), 0, 1.0, true, vec({1})), target, 0.98) == 1.0);
    // Per-step rewards 1, 1, 1 discounted within the span at gamma 0.5.
    const double span_r = 1.0 + 0.5 + 0.25;
    CHECK(td_target(item(vec({0}), 0, span_r, false, vec({1}), 3), target, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
    target.as_tabular().table.row(1) << 1.0, 0.0;
    CHECK(td_target(item(vec({0}), 0, 0.0, false, vec({1})), target, 0.98) == doctest::Approx(0.98).epsilon(1e-15));
  }

  TEST_CASE("single terminal item from zero values has loss 1") {
    QPolicy q = QPolicy::network(2, {4}, 2, 5e-4, 0);
    q.as_network().net.set_params(Eigen::VectorXd::Zero(q.as_network().net.parameter_count()));
    const QPolicy target = q;
    CHECK(dqn_update(q, target, {item(vec({0.5, 0.5}), 1, 1.0, true, vec({0, 0}))}, QLearnerConfig{}) == 1.0);
  }

  TEST_CASE("fixed point leaves parameters unchanged") {
    QPolicy q = QPolicy::network(3, {8, 8}, 3, 5e-4, 4);
    const QPolicy target = q;
    Rng rng(4);
    std::normal_distribution<double> n01;
    std::vector<Transition> batch;
    for (int i = 0; i < 16; ++i) {
      Eigen::VectorXd s(3);
      for (auto& v : s) v = n01(rng);
      const int a = i % 3;
      batch.push_back(item(s, a, q_values(q, s)[a], true, s));
    }
    const Eigen::VectorXd before = q.params();
    CHECK(dqn_update(q, target, batch, QLearnerConfig{}) < 1e-24);
    CHECK((q.params() - before).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("repeated updates on one batch reduce the loss") {
    QPolicy q = QPolicy::network(4, {64, 64}, 3, 5e-4, 9);
    const QPolicy target = q;
    Rng rng(9);
    std::normal_distribution<double> n01;
    std::vector<Transition> batch;
    for (int i = 0; i < 64; ++i) {
      Eigen::VectorXd s(4), sn(4);
      for (auto& v : s) v = n01(rng);
      for (auto& v : sn) v = n01(rng);
      batch.push_back(item(s, i % 3, n01(rng), i % 4 == 0, sn));
    }
    std::vector<double> losses;
    for (int i = 0; i < 100; ++i) losses.push_back(dqn_update(q, target, batch, QLearnerConfig{}));
    int rises = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] > losses[i - 1];
    CHECK(rises <= 5);
    CHECK(losses.back() < losses.front());
  }

  TEST_CASE("sync_target copies exactly and the target stays frozen") {
    QPolicy q = QPolicy::network(3, {16}, 2, 1e-2, 1);
    QPolicy target = QPolicy::network(3, {16}, 2, 1e-2, 2);
    sync_target(q, target);
    Rng rng(3);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 100; ++i) {
      Eigen::VectorXd s(3);
      for (auto& v : s) v = n01(rng);
      CHECK(q_values(target, s) == q_values(q, s));
    }
    const Eigen::VectorXd frozen = target.params();
    dqn_update(q, target, {item(vec({1, 2, 3}), 0, 5.0, true, vec({0, 0, 0}))}, QLearnerConfig{});
    CHECK(target.params() == frozen);
    CHECK(q.params() != frozen);
    QPolicy other = QPolicy::network(3, {8}, 2, 1e-2, 1);
    CHECK_THROWS_AS(sync_target(q, other), std::invalid_argument);
  }
}

TEST_SUITE("tabular oracle") {
  TEST_CASE("three-cell chain matches value iteration") {
    const GridWorld chain = GridWorld::chain(3);
    const Eigen::MatrixXd oracle = value_iteration(chain);
    CHECK(oracle.rowwise().maxCoeff()[0] == -2.0);
    CHECK(oracle.rowwise().maxCoeff()[1] == -1.0);
    check_matches_oracle(chain, learn_tabular(chain, 200, 1));
  }

  TEST_CASE("5x5 grid matches value iteration") {
    const GridWorld grid(5, 5, 4, 4);
    check_matches_oracle(grid, learn_tabular(grid, 2000, 2));
  }
}

TEST_SUITE("configuration and checkpoints") {
  TEST_CASE("config validation") {
    QLearnerConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.batch_size = 2000;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.reward_scale = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("network checkpoint round trip is bit-identical") {
    QPolicy q = QPolicy::network(5, {64, 64}, 4, 5e-4, 12);
    const QPolicy loaded = load_policy(save_policy(q, QLearnerConfig{}));
    Rng rng(12);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd s(5);
      for (auto& v : s) v = n01(rng);
      CHECK(q_values(loaded, s) == q_values(q, s));
    }
  }

  TEST_CASE("tabular checkpoint round trip") {
    QPolicy q = QPolicy::tabular(3, 2, 0.5);
    q.as_tabular().table << 0.1, -2.0 / 3.0, 1e-300, 7.0, -0.0, 3.14159;
    const QPolicy loaded = load_policy(save_policy(q, QLearnerConfig{}));
    CHECK(loaded.as_tabular().table == q.as_tabular().table);
    CHECK(loaded.as_tabular().step_size == 0.5);
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    CHECK_THROWS(load_policy("not json"));
    CHECK_THROWS(load_policy(R"({"format":"something else"})"));
  }
}

namespace {

// One-step episodes; the reward is the first action component of the step.
class BanditEnv : public Environment {
 public:
  void reset(std::uint64_t) override { last_ = 0.0; }
  SchemaPtr schema() const override { return schema_; }
  Features features() const override { return {schema_, vec({1.0})}; }
  Eigen::Index action_size() const override { return 1; }
  void step(const Eigen::VectorXd& a) override { last_ = a[0]; }
  double reward(std::string_view, int) const override { return last_; }
  bool task_success() const override { return last_ == 1.0; }

 private:
  SchemaPtr schema_ = std::make_shared<const FeatureSchema>(std::vector<std::string>{"x"});
  double last_ = 0.0;
};

class Constant : public ControlPolicy {
 public:
  explicit Constant(double v) : v_(v) {}
  Eigen::VectorXd act(const Observation&) override { return vec({v_}); }

 private:
  double v_;
};

}  // namespace

TEST_SUITE("selector training") {
  ConceptNetwork bandit_network() {
    ConceptNode root;
    root.id = ConceptId("root");
    root.kind = ConceptKind::Selector;
    root.children = {ConceptId("b"), ConceptId("a")};
    root.reward = "r";
    ConceptNode a, b;
    a.id = ConceptId("a");
    b.id = ConceptId("b");
    a.max_steps = b.max_steps = 1;
    return build_network({root, a, b});
  }

  SelectorTrainingConfig bandit_config() {
    SelectorTrainingConfig cfg;
    cfg.q.min_fill = 32;
    cfg.q.batch_size = 16;
    cfg.q.hidden = {8};
    cfg.q.learning_rate = 1e-2;
    cfg.q.epsilon.horizon = 300;
    cfg.budget = 1500;
    cfg.step_cap = 1;
    cfg.eval_every_episodes = 100;
    return cfg;
  }

  TEST_CASE("bandit selector learns the rewarding child") {
    const auto net = bandit_network();
    PolicyBindings bindings;
    bindings.bind_control(ConceptId("a"), std::make_shared<Constant>(1.0));
    bindings.bind_control(ConceptId("b"), std::make_shared<Constant>(0.0));
    BanditEnv env;
    const auto result = train_selector(net, ConceptId("root"), bindings, env, bandit_config());
    const Eigen::VectorXd q = q_values(*result.policy, vec({1.0}));
    // Children are ordered (b, a). Choosing a succeeds, so Q(a) = 1. Choosing b only hits the step cap,
    // which truncates without a terminal flag, so Q(b) bootstraps to gamma * Q(a).
    const double gamma = bandit_config().q.gamma;
    CHECK(greedy_action(q) == 1);
    CHECK(std::abs(q[1] - 1.0) < 0.01);
    CHECK(std::abs(q[0] - gamma) < 0.01);
    CHECK(result.env_transitions == 1500);
    CHECK(result.selector_decisions == 1500);
    CHECK(result.best_success_rate == 1.0);
  }

  TEST_CASE("budget errors and untrained descendants") {
    const auto net = bandit_network();
    PolicyBindings bindings;
    bindings.bind_control(ConceptId("a"), std::make_shared<Constant>(1.0));
    bindings.bind_control(ConceptId("b"), std::make_shared<Constant>(0.0));
    BanditEnv env;
    auto cfg = bandit_config();
    cfg.budget = 0;
    CHECK_THROWS_AS(train_selector(net, ConceptId("root"), bindings, env, cfg), std::invalid_argument);
    cfg.budget = 10;
    CHECK_THROWS_AS(train_selector(net, ConceptId("root"), bindings, env, cfg), std::invalid_argument);

    PolicyBindings partial;
    partial.bind_control(ConceptId("a"), std::make_shared<Constant>(1.0));
    partial.bind_control(ConceptId("b"), std::make_shared<Constant>(0.0), false);
    CHECK_THROWS_AS(train_selector(net, ConceptId("root"), partial, env, bandit_config()), std::invalid_argument);
  }

  TEST_CASE("reward_scale scales the replayed rewards") {
    const auto net = bandit_network();
    PolicyBindings bindings;
    bindings.bind_control(ConceptId("a"), std::make_shared<Constant>(1.0));
    bindings.bind_control(ConceptId("b"), std::make_shared<Constant>(0.0));
    BanditEnv env;
    auto cfg = bandit_config();
    cfg.q.reward_scale = 0.5;
    const auto result = train_selector(net, ConceptId("root"), bindings, env, cfg);
    const Eigen::VectorXd q = q_values(*result.policy, vec({1.0}));
    CHECK(std::abs(q[1] - 0.5) < 0.05);
  }

  TEST_CASE("same seed gives the same curve") {
    const auto net = bandit_network();
    PolicyBindings bindings;
    bindings.bind_control(ConceptId("a"), std::make_shared<Constant>(1.0));
    bindings.bind_control(ConceptId("b"), std::make_shared<Constant>(0.0));
    BanditEnv env;
    const auto r1 = train_selector(net, ConceptId("root"), bindings, env, bandit_config());
    const auto r2 = train_selector(net, ConceptId("root"), bindings, env, bandit_config());
    CHECK(r1.policy->params() == r2.policy->params());
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (std::size_t i = 0; i < r1.curve.size(); ++i) {
      CHECK(r1.curve[i].mean_eval_return == r2.curve[i].mean_eval_return);
      CHECK(r1.curve[i].learner_steps == r2.curve[i].learner_steps);
    }
  }
}
