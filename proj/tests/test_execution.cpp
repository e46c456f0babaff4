#include "cnrl/env/benchmark.hpp"
#include "cnrl/execution.hpp"
#include "support.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <map>

using namespace cnrl;
using cnrl::testing::audit_trace;
using cnrl::testing::scripted_bindings;
using cnrl::testing::validity_violations;

namespace {

std::vector<std::string> control_sequence(const ConceptNetwork& net, const EpisodeTrace& trace) {
  std::vector<std::string> out;
  for (const auto& s : trace.spans)
    if (net.node(s.concept_id).kind == ConceptKind::Control) out.push_back(s.concept_id.str());
  return out;
}

// Untrained Q-networks on every selector, so exploration drives the choices.
PolicyBindings exploring_bindings(const ConceptNetwork& net, const GraspStackConfig& cfg, std::uint64_t seed,
                                  double gamma) {
  PolicyBindings b;
  bind_scripted(net, cfg, b);
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& node = net.node(i);
    if (node.kind != ConceptKind::Selector) continue;
    const int inputs = static_cast<int>(output_names(net.observation_spec(i)).size());
    b.bind_selector(node.id,
                    std::make_shared<QPolicy>(QPolicy::network(inputs, {16}, static_cast<int>(net.children(i).size()),
                                                               1e-3, seed + i)),
                    gamma);
  }
  return b;
}

RunOptions exploring_options(std::uint64_t seed, const char* trainee) {
  RunOptions o;
  o.mode = RunMode::Train;
  o.seed = seed;
  o.trainee = ConceptId(trainee);
  o.epsilon = [] { return 0.5; };
  return o;
}

}  // namespace

TEST_CASE("a zero-action root control runs the full episode as one span") {
  GraspStackConfig cfg;
  ConceptNode idle;
  idle.id = ConceptId("idle");
  idle.policy = {"scripted", "zero", {}, ""};
  const auto net = build_network({idle});
  PolicyBindings b;
  bind_scripted(net, cfg, b);
  GraspStackEnv env(cfg);
  env.reset(3);
  const Eigen::VectorXd start = env.feature_values();
  const auto trace = run_episode(net, b, env, RunOptions{});
  REQUIRE(trace.spans.size() == 1);
  CHECK(trace.spans[0].start_step == 0);
  CHECK(trace.spans[0].end_step == 150);
  CHECK(trace.spans[0].termination == TerminationKind::EpisodeEnd);
  CHECK(trace.total_env_steps == 150);
  CHECK_FALSE(trace.success);
  const auto t = grasp_stack_schema()->index("t");
  Eigen::VectorXd end = env.feature_values();
  end[t] = start[t];
  CHECK(end == start);
}

TEST_CASE("scripted tree visits the five stages in order") {
  GraspStackConfig cfg;
  const auto net = tree_network(cfg);
  const auto b = scripted_bindings(net, cfg);
  GraspStackEnv env(cfg);
  env.reset(0);
  const auto trace = run_episode(net, b, env, RunOptions{});
  CHECK(trace.success);
  CHECK(control_sequence(net, trace) == std::vector<std::string>{"staging1", "orient", "lift", "staging2", "stack"});
  for (const auto& s : trace.spans)
    if (net.node(s.concept_id).kind == ConceptKind::Control) CHECK(s.termination == TerminationKind::Goal);
  // Each grasp activation makes one decision, so root enters grasp twice.
  CHECK(trace.selector_decisions.at(ConceptId("root")) == 5);
  CHECK(trace.selector_decisions.at(ConceptId("grasp")) == 2);
  CHECK(audit_trace(net, trace).empty());
}

TEST_CASE("choosing an invalid child burns one no-op step") {
  GraspStackConfig cfg;
  const auto net = flat_network(cfg);
  PolicyBindings b;
  bind_scripted(net, cfg, b);
  b.bind_selector_rule(ConceptId("root"), [](const Observation&) { return 4; }, 0.98);  // stack needs a held prism
  GraspStackEnv env(cfg);
  env.reset(1);
  const auto trace = run_episode(net, b, env, RunOptions{});
  CHECK(trace.total_env_steps == 150);
  CHECK(trace.selector_decisions.at(ConceptId("root")) == 150);
  for (const auto& step : trace.steps) {
    CHECK(step.noop);
    CHECK(step.transition.action_vector.isZero(0.0));
  }
  for (const auto& s : trace.spans) {
    CHECK(s.noop);
    CHECK(s.end_step - s.start_step == 1);
    CHECK(s.termination == TerminationKind::RegionExit);
  }
  CHECK(audit_trace(net, trace).empty());
}

TEST_CASE("max_root_activations and the step cap bound the episode") {
  GraspStackConfig cfg;
  const auto net = tree_network(cfg);
  const auto b = scripted_bindings(net, cfg);
  GraspStackEnv env(cfg);
  env.reset(0);
  RunOptions o;
  o.max_root_activations = 1;
  const auto one = run_episode(net, b, env, o);
  CHECK(one.selector_decisions.at(ConceptId("root")) == 1);
  CHECK(control_sequence(net, one) == std::vector<std::string>{"staging1"});

  env.reset(0);
  RunOptions capped;
  capped.step_cap = 10;
  const auto short_run = run_episode(net, b, env, capped);
  CHECK(short_run.total_env_steps == 10);
  CHECK(short_run.spans.back().termination == TerminationKind::EpisodeEnd);

  capped.step_cap = 0;
  CHECK_THROWS_AS(run_episode(net, b, env, capped), std::invalid_argument);
}

TEST_CASE("missing or mis-sized bindings are reported") {
  GraspStackConfig cfg;
  const auto net = tree_network(cfg);
  GraspStackEnv env(cfg);
  PolicyBindings none;
  CHECK_THROWS_AS(run_episode(net, none, env, RunOptions{}), std::invalid_argument);
  CHECK_THROWS_AS(none.require_complete(net), std::invalid_argument);
  auto b = scripted_bindings(net, cfg);
  CHECK_NOTHROW(b.require_complete(net));
  b.bind_selector(ConceptId("root"), std::make_shared<QPolicy>(QPolicy::network(12, {8}, 3, 1e-3, 0)), 0.98);
  CHECK_THROWS_AS(run_episode(net, b, env, RunOptions{}), std::invalid_argument);
}

TEST_CASE("exploring episodes keep spans nested, disjoint and inside validity regions") {
  GraspStackConfig cfg;
  for (const bool nested : {false, true}) {
    const auto net = nested ? tree_network(cfg) : flat_network(cfg);
    for (int ep = 0; ep < 100; ++ep) {
      const auto b = exploring_bindings(net, cfg, static_cast<std::uint64_t>(ep), 0.98);
      GraspStackEnv env(cfg);
      env.reset(static_cast<std::uint64_t>(ep));
      const auto trace = run_episode(net, b, env, exploring_options(ep, ep % 2 && nested ? "grasp" : "root"));
      CHECK(audit_trace(net, trace) == "");
      CHECK(validity_violations(net, trace, grasp_stack_schema(), RunMode::Train) == 0);
      CHECK(trace.total_env_steps <= kGlobalStepCap);
    }
  }
}

TEST_CASE("span rewards under each selector equal its decision rewards") {
  GraspStackConfig cfg;
  const auto net = tree_network(cfg);
  for (int ep = 0; ep < 50; ++ep) {
    const auto b = exploring_bindings(net, cfg, 100 + ep, 0.98);
    GraspStackEnv env(cfg);
    env.reset(static_cast<std::uint64_t>(ep));
    const auto trace = run_episode(net, b, env, exploring_options(ep, "root"));
    std::map<int, double> by_span, by_decision;
    for (std::size_t k = 0; k < trace.spans.size(); ++k) {
      const auto& s = trace.spans[k];
      if (s.parent >= 0) by_span[s.parent] += s.cumulative_reward;
    }
    for (const auto& d : trace.decisions) {
      by_decision[trace.spans[static_cast<std::size_t>(d.span)].parent] += d.transition.r;
    }
    CHECK(by_span == by_decision);
  }
}

TEST_CASE("root spans accumulate the undiscounted root reward") {
  GraspStackConfig cfg;
  const auto net = flat_network(cfg);
  const auto b = scripted_bindings(net, cfg);
  GraspStackEnv env(cfg);
  env.reset(5);
  const auto trace = run_episode(net, b, env, RunOptions{});
  double root_spans = 0.0;
  for (const auto& s : trace.spans)
    if (s.parent < 0) root_spans += s.cumulative_reward;
  CHECK(root_spans == trace.total_reward());
  CHECK(trace.total_reward() == cfg.rewards.w_stage1 + cfg.rewards.w_grasp + cfg.rewards.w_stage2 +
                                    cfg.rewards.w_stack);
}

TEST_CASE("span-compressed decisions reconstruct the discounted return") {
  GraspStackConfig cfg;
  for (const bool nested : {false, true}) {
    const auto net = nested ? tree_network(cfg) : flat_network(cfg);
    // Powers of two make every discount exact, so both sums are bit-identical.
    const auto exact = scripted_bindings(net, cfg, 0.5);
    const auto stock = scripted_bindings(net, cfg, 0.98);
    for (int ep = 0; ep < 100; ++ep) {
      for (const double gamma : {0.5, 0.98}) {
        GraspStackEnv env(cfg);
        env.reset(static_cast<std::uint64_t>(ep));
        const auto trace = run_episode(net, gamma == 0.5 ? exact : stock, env, RunOptions{});
        double primitive = 0.0, discount = 1.0;
        for (const auto& step : trace.steps) {
          primitive += discount * step.transition.r;
          discount *= gamma;
        }
        double compressed = 0.0;
        for (const auto& d : trace.decisions) {
          if (d.selector.str() != "root") continue;
          compressed += std::pow(gamma, d.start_step) * d.transition.r;
        }
        if (gamma == 0.5) {
          CHECK(compressed == primitive);
        } else {
          CHECK(std::abs(compressed - primitive) < 1e-12);
        }
        int decisions = 0;
        for (const auto& [id, n] : trace.selector_decisions) decisions += n;
        CHECK(decisions < trace.total_env_steps);
      }
    }
  }
}

TEST_CASE("decision transitions bootstrap over their span") {
  GraspStackConfig cfg;
  const auto net = tree_network(cfg);
  const auto b = scripted_bindings(net, cfg);
  GraspStackEnv env(cfg);
  env.reset(2);
  const auto trace = run_episode(net, b, env, RunOptions{});
  for (const auto& d : trace.decisions) {
    const auto& child = trace.spans[static_cast<std::size_t>(d.span)];
    CHECK(d.transition.span_len == child.end_step - child.start_step);
    CHECK(d.start_step == child.start_step);
  }
  CHECK(trace.decisions.back().transition.tau == trace.success);
}
