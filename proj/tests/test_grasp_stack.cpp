#include "cnrl/env/benchmark.hpp"
#include "cnrl/env/grasp_stack.hpp"
#include "cnrl/env/scripted.hpp"

#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

using namespace cnrl;

namespace {

Eigen::VectorXd action(double vx, double vy, double vz, double yaw_rate, double finger_rate) {
  Eigen::VectorXd a(5);
  a << vx, vy, vz, yaw_rate, finger_rate;
  return a;
}

GraspStackConfig no_jitter() {
  GraspStackConfig cfg;
  cfg.jitter_xy = cfg.jitter_yaw = 0.0;
  cfg.gripper_jitter_xy = cfg.gripper_jitter_z = cfg.gripper_jitter_yaw = 0.0;
  return cfg;
}

// Pinch at the grasp point, yaw aligned, fingers open.
GraspStackState pre_grasp(const GraspStackConfig& cfg) {
  GraspStackState s = sample_reset(cfg, 0);
  s.pinch = grasp_point(s, cfg);
  s.pinch_yaw = s.prism_yaw;
  s.finger_sep = cfg.rewards.p_max;
  return s;
}

// Runs one leaf concept from the env's current state until it terminates.
std::pair<TerminationKind, int> run_leaf(const ConceptNode& node, GraspStackEnv& env) {
  const auto& cfg = env.config();
  auto policy = make_scripted_policy(node, cfg);
  for (int k = 1;; ++k) {
    const Observation obs = apply_transformation(node.state_map, env.features());
    env.step(apply_action_map(node.action_map, policy->act(obs)));
    if (auto term = terminal_check(node.id.str(), env.features(), k, cfg)) return {*term, k};
  }
}

}  // namespace

TEST_SUITE("reset") {
  TEST_CASE("fixed seed is deterministic") {
    const GraspStackConfig cfg;
    const auto a = derive_features(sample_reset(cfg, 42), cfg);
    const auto b = derive_features(sample_reset(cfg, 42), cfg);
    CHECK(a == b);
    CHECK(a != derive_features(sample_reset(cfg, 43), cfg));
  }

  TEST_CASE("zero jitter gives the canonical layout") {
    const GraspStackConfig cfg = no_jitter();
    const GraspStackState s = sample_reset(cfg, 99);
    CHECK(s.prism == Eigen::Vector3d(cfg.prism_xy.x(), cfg.prism_xy.y(), cfg.prism_half_height));
    CHECK(s.cube == Eigen::Vector3d(cfg.cube_xy.x(), cfg.cube_xy.y(), 0.0));
    CHECK(s.pinch == cfg.gripper_start);
    CHECK(s.prism_yaw == 0.0);
    CHECK(s.pinch_yaw == 0.0);
    CHECK(s.finger_sep == cfg.rewards.p_max);
    CHECK_FALSE(s.held);
    CHECK(s.t == 0);
  }

  TEST_CASE("prism x offsets are uniform within 10 cm") {
    const GraspStackConfig cfg;
    const int n = 10'000;
    std::vector<double> u;
    for (int i = 0; i < n; ++i) {
      const double off = sample_reset(cfg, static_cast<std::uint64_t>(i)).prism.x() - cfg.prism_xy.x();
      REQUIRE(std::abs(off) <= 0.10);
      u.push_back((off + 0.10) / 0.20);
    }
    std::sort(u.begin(), u.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      ks = std::max({ks, std::abs(u[i] - double(i) / n), std::abs(u[i] - double(i + 1) / n)});
    }
    CHECK(ks < 1.63 / std::sqrt(double(n)));
  }
}

TEST_SUITE("dynamics") {
  TEST_CASE("zero action is a fixed point") {
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 5);
    const GraspStackState before = s;
    integrate(s, Eigen::VectorXd::Zero(5), cfg);
    CHECK(s.t == before.t + 1);
    s.t = before.t;
    CHECK(derive_features(s, cfg) == derive_features(before, cfg));
  }

  TEST_CASE("translation by v * dt") {
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 5);
    const double x0 = s.pinch.x();
    integrate(s, action(0.2, 0, 0, 0, 0), cfg);
    CHECK(std::abs(s.pinch.x() - (x0 + 0.01)) < 1e-15);
  }

  TEST_CASE("non-finite and mis-sized actions are rejected") {
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 5);
    CHECK_THROWS_AS(integrate(s, action(std::nan(""), 0, 0, 0, 0), cfg), std::domain_error);
    CHECK_THROWS_AS(integrate(s, Eigen::VectorXd::Zero(3), cfg), std::invalid_argument);
  }

  TEST_CASE("grasp latch time matches the closed form") {
    const GraspStackConfig cfg;
    GraspStackState s = pre_grasp(cfg);
    const double rate = cfg.finger_rate_max;
    const int bound =
        static_cast<int>(std::ceil((s.finger_sep - cfg.rewards.eps_p) / (rate * cfg.dt)));
    int steps = 0;
    while (!s.held && steps < 100) {
      integrate(s, action(0, 0, 0, 0, -rate), cfg);
      ++steps;
    }
    CHECK(s.held);
    CHECK(steps <= bound);
    CHECK(steps == 7);
  }

  TEST_CASE("opening the fingers releases the prism") {
    const GraspStackConfig cfg;
    GraspStackState s = pre_grasp(cfg);
    while (!s.held) integrate(s, action(0, 0, 0, 0, -cfg.finger_rate_max), cfg);
    for (int i = 0; i < 5; ++i) integrate(s, action(0, 0, 0.2, 0, 0), cfg);
    for (int i = 0; i < 10 && s.held; ++i) integrate(s, action(0, 0, 0, 0, cfg.finger_rate_max), cfg);
    CHECK_FALSE(s.held);
    CHECK(s.prism.z() == cfg.prism_half_height);
  }

  TEST_CASE("held prism moves rigidly with the gripper") {
    const GraspStackConfig cfg;
    GraspStackState s = pre_grasp(cfg);
    while (!s.held) integrate(s, action(0, 0, 0, 0, -cfg.finger_rate_max), cfg);
    const Eigen::Vector3d offset = s.prism - s.pinch;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      integrate(s, action(u(rng), u(rng), u(rng), 200 * u(rng), -std::abs(u(rng))), cfg);
      REQUIRE(s.held);
      CHECK(((s.prism - s.pinch) - offset).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("state stays inside its bounds under random commands") {
    const GraspStackConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int ep = 0; ep < 50; ++ep) {
      GraspStackState s = sample_reset(cfg, static_cast<std::uint64_t>(ep));
      for (int i = 0; i < 150; ++i) {
        const GraspStackState prev = s;
        const Eigen::VectorXd a = action(u(rng), u(rng), u(rng), 100 * u(rng), u(rng));
        integrate(s, a, cfg);
        REQUIRE(std::abs(s.pinch.x()) <= cfg.table_half_extent);
        REQUIRE(std::abs(s.pinch.y()) <= cfg.table_half_extent);
        REQUIRE(s.pinch.z() >= 0.0);
        REQUIRE(s.pinch.z() <= cfg.z_max);
        REQUIRE(s.finger_sep >= 0.0);
        REQUIRE(s.finger_sep <= cfg.rewards.p_max);
        REQUIRE(s.pinch_yaw > -180.0);
        REQUIRE(s.pinch_yaw <= 180.0);
        REQUIRE((s.pinch - prev.pinch).cwiseAbs().maxCoeff() <= cfg.v_max * cfg.dt + 1e-15);
      }
    }
  }

  TEST_CASE("same seed and actions give bit-identical trajectories") {
    auto rollout = [] {
      GraspStackEnv env;
      env.reset(77);
      std::mt19937_64 rng(8);
      std::uniform_real_distribution<double> u(-0.3, 0.3);
      std::vector<Eigen::VectorXd> out;
      for (int i = 0; i < 150; ++i) {
        env.step(action(u(rng), u(rng), u(rng), 100 * u(rng), u(rng)));
        out.push_back(env.feature_values());
      }
      return out;
    };
    CHECK(rollout() == rollout());
  }
}

TEST_SUITE("features") {
  TEST_CASE("pinch at the grasp point has zero grasp distance") {
    const GraspStackConfig cfg;
    const auto f = Features(grasp_stack_schema(), derive_features(pre_grasp(cfg), cfg));
    CHECK(f["grasp_dist"] == 0.0);
    CHECK(std::abs(f["pinch_prism_dist"] - (cfg.prism_half_height + cfg.grasp_offset)) < 1e-15);
  }

  TEST_CASE("yaw misalignment folds under the 90 degree symmetry") {
    CHECK(fold_misalignment(100.0) == doctest::Approx(10.0));
    CHECK(fold_misalignment(-100.0) == doctest::Approx(10.0));
    CHECK(fold_misalignment(45.0) == 45.0);
    CHECK(fold_misalignment(0.0) == 0.0);
    CHECK(fold_signed(100.0) == doctest::Approx(10.0));
    CHECK(fold_signed(80.0) == doctest::Approx(-10.0));
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 0);
    s.prism_yaw = 100.0;
    s.pinch_yaw = 0.0;
    const auto f = Features(grasp_stack_schema(), derive_features(s, cfg));
    CHECK(f["orient_theta_x"] == doctest::Approx(10.0));
    CHECK(f["orient_theta_z"] == 0.0);
  }

  TEST_CASE("prism resting on the cube has zero stack distance") {
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 0);
    s.prism = Eigen::Vector3d(s.cube.x(), s.cube.y(), cfg.cube_size + cfg.prism_half_height);
    const auto f = Features(grasp_stack_schema(), derive_features(s, cfg));
    CHECK(f["stack_dist"] < 1e-12);
  }
}

TEST_SUITE("terminal conditions") {
  TEST_CASE("lift leaving the drift cylinder is a region exit") {
    const GraspStackConfig cfg;
    GraspStackState s = pre_grasp(cfg);
    s.prism.x() += cfg.r_cyl + 0.01;
    s.pinch.x() += cfg.r_cyl + 0.01;
    CHECK(terminal_check("lift", Features(grasp_stack_schema(), derive_features(s, cfg)), 1, cfg) ==
          TerminationKind::RegionExit);
  }

  TEST_CASE("orient aligned above the prism is a goal") {
    const GraspStackConfig cfg;
    const GraspStackState s = pre_grasp(cfg);
    CHECK(terminal_check("orient", Features(grasp_stack_schema(), derive_features(s, cfg)), 1, cfg) ==
          TerminationKind::Goal);
    // Goal wins over the step budget at the same step.
    CHECK(terminal_check("orient", Features(grasp_stack_schema(), derive_features(s, cfg)), 50, cfg) ==
          TerminationKind::Goal);
  }

  TEST_CASE("the fiftieth span step without a goal hits the step budget") {
    const GraspStackConfig cfg;
    const GraspStackState s = sample_reset(cfg, 1);
    const auto f = Features(grasp_stack_schema(), derive_features(s, cfg));
    CHECK(terminal_check("staging1", f, 49, cfg) == std::nullopt);
    CHECK(terminal_check("staging1", f, 50, cfg) == TerminationKind::StepBudget);
    CHECK_THROWS_AS(terminal_check("nope", f, 1, cfg), std::invalid_argument);
  }
}

TEST_SUITE("scripted controllers") {
  TEST_CASE("starting at the waypoint is an immediate goal") {
    const GraspStackConfig cfg;
    GraspStackState s = sample_reset(cfg, 2);
    s.pinch = grasp_point(s, cfg) + Eigen::Vector3d(0, 0, cfg.staging_height);
    GraspStackEnv env(cfg);
    env.set_state(s);
    const auto obs = env.features();
    CHECK(terminal_check("staging1", obs, 0, cfg) == TerminationKind::Goal);
    const Eigen::VectorXd a = scripted_action("staging1", obs, {}, cfg);
    CHECK(a.head<3>().isZero(0.0));
  }

  TEST_CASE("half-metre staging move finishes within the kinematic time bound") {
    const GraspStackConfig cfg = no_jitter();
    GraspStackState s = sample_reset(cfg, 0);
    s.pinch = grasp_point(s, cfg) + Eigen::Vector3d(0.5, 0, cfg.staging_height);
    GraspStackEnv env(cfg);
    env.set_state(s);
    const auto [term, steps] = run_leaf(leaf_nodes(cfg)[0], env);
    const int travel = static_cast<int>(std::ceil(0.5 / (cfg.v_max * cfg.dt)));
    CHECK(term == TerminationKind::Goal);
    CHECK(steps <= travel + 5);
  }

  TEST_CASE("unreachable waypoint runs into the step budget") {
    GraspStackConfig cfg = no_jitter();
    cfg.v_max = 0.01;
    GraspStackState s = sample_reset(cfg, 0);
    s.pinch = grasp_point(s, cfg) + Eigen::Vector3d(0.5, 0, cfg.staging_height);
    GraspStackEnv env(cfg);
    env.set_state(s);
    const auto [term, steps] = run_leaf(leaf_nodes(cfg)[0], env);
    CHECK(term == TerminationKind::StepBudget);
    CHECK(steps == cfg.sub_step_cap);
  }

  TEST_CASE("unknown controller names are rejected") {
    const GraspStackConfig cfg;
    GraspStackEnv env(cfg);
    CHECK_THROWS_AS(scripted_action("fly", env.features(), {}, cfg), std::invalid_argument);
  }

  TEST_CASE("the scripted chain completes the full task from almost every reset") {
    const GraspStackConfig cfg;
    const auto leaves = leaf_nodes(cfg);
    int successes = 0;
    const int episodes = 1000;
    for (int ep = 0; ep < episodes; ++ep) {
      GraspStackEnv env(cfg);
      env.reset(static_cast<std::uint64_t>(ep));
      bool ok = true;
      int total = 0;
      for (const auto& leaf : leaves) {
        const auto [term, steps] = run_leaf(leaf, env);
        total += steps;
        if (term != TerminationKind::Goal) {
          ok = false;
          break;
        }
      }
      if (ok && total <= cfg.step_cap && env.task_success()) ++successes;
    }
    CHECK(successes >= 990);
  }
}

TEST_SUITE("sub-task resets") {
  TEST_CASE("sub-task episodes start where the scripted prefix ends") {
    const GraspStackConfig cfg;
    GraspStackEnv lift(cfg, Task::Lift);
    lift.reset(4);
    CHECK(lift.features()["grasp_dist"] < cfg.rewards.eps_d);
    CHECK(lift.state().t == 0);
    GraspStackEnv stack(cfg, Task::Stack);
    stack.reset(4);
    CHECK(stack.state().held);
    CHECK(stack.episode_cap() == cfg.sub_step_cap);
  }

  TEST_CASE("task names round trip") {
    for (Task t : {Task::Full, Task::Staging1, Task::Orient, Task::Lift, Task::Grasp, Task::Staging2, Task::Stack})
      CHECK(task_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(task_from_string("juggle"), std::invalid_argument);
  }
}
