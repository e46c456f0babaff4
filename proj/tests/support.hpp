#pragma once

// Test-side oracles shared by the execution, benchmark, harness and
// acceptance tests: hand-written selector rules for the benchmark networks
// and trace audits written against the public data model only.

#include "cnrl/concept_graph.hpp"
#include "cnrl/env/benchmark.hpp"
#include "cnrl/execution.hpp"

#include <cmath>
#include <string>

namespace cnrl::testing {

// Selector observations carry lengths scaled by 3.
inline constexpr double kScale = 3.0;

// Root of the nested tree: children {staging1, grasp, staging2, stack}.
inline int tree_root_rule(const Observation& o) {
  if (o["held"] < 0.5) return o["pinch_prism_dist"] > kScale * 0.16 ? 0 : 1;
  const double dx = (o["prism_x"] - o["cube_x"]) / kScale;
  const double dy = (o["prism_y"] - o["cube_y"]) / kScale;
  return std::hypot(dx, dy) < 0.02 ? 3 : 2;
}

// Grasp selector: children {orient, lift}.
inline int grasp_rule(const Observation& o) {
  if (o["held"] > 0.5) return 1;
  return o["pinch_prism_dist"] < kScale * 0.07 ? 1 : 0;
}

// Root of the flat network: children {staging1, orient, lift, staging2, stack}.
inline int flat_root_rule(const Observation& o) {
  const int tree = tree_root_rule(o);
  if (tree == 0) return 0;
  if (tree == 1) return 1 + grasp_rule(o);
  return tree + 1;
}

// Scripted leaves plus rule selectors for a benchmark network built by
// flat_network or tree_network.
inline PolicyBindings scripted_bindings(const ConceptNetwork& net, const GraspStackConfig& cfg, double gamma = 0.98) {
  PolicyBindings b;
  bind_scripted(net, cfg, b);
  const bool nested = net.find(ConceptId("grasp")).has_value();
  b.bind_selector_rule(ConceptId("root"), nested ? tree_root_rule : flat_root_rule, gamma);
  if (nested) b.bind_selector_rule(ConceptId("grasp"), grasp_rule, gamma);
  return b;
}

// Number of non-no-op steps taken while the acting concept's validity region
// (the eval override in eval mode) did not contain the pre-step observation.
inline int validity_violations(const ConceptNetwork& net, const EpisodeTrace& trace, const SchemaPtr& schema,
                               RunMode mode = RunMode::Eval) {
  int bad = 0;
  for (const auto& step : trace.steps) {
    if (step.noop) continue;
    const auto i = net.index_of(step.concept_id);
    const auto& node = net.node(i);
    const ValidityRegion& region =
        mode == RunMode::Eval && node.eval_validity ? *node.eval_validity : node.validity;
    const Observation obs = apply_transformation(net.observation_spec(i), Features(schema, step.transition.s));
    if (!is_valid(region, obs)) ++bad;
  }
  return bad;
}

// Checks the structural trace invariants; returns an empty string when they hold.
inline std::string audit_trace(const ConceptNetwork& net, const EpisodeTrace& trace) {
  const int n = static_cast<int>(trace.steps.size());
  if (n != trace.total_env_steps) return "step count mismatch";
  // Control spans tile the episode in order and own exactly their steps.
  int cursor = 0;
  for (std::size_t k = 0; k < trace.spans.size(); ++k) {
    const Span& s = trace.spans[k];
    if (s.end_step < s.start_step) return "negative span";
    if (s.parent >= 0) {
      const Span& p = trace.spans[static_cast<std::size_t>(s.parent)];
      if (s.start_step < p.start_step || s.end_step > p.end_step) return "child span escapes its parent";
      if (static_cast<std::size_t>(s.parent) >= k) return "parent recorded after child";
    }
    const auto& node = net.node(s.concept_id);
    if (node.kind != ConceptKind::Control) continue;
    if (s.start_step != cursor) return "control spans are not contiguous";
    if (s.noop && s.end_step - s.start_step != 1) return "no-op span longer than one step";
    if (net.has_parent(net.index_of(s.concept_id)) && s.end_step - s.start_step > node.max_steps)
      return "span exceeds its step budget";
    for (int t = s.start_step; t < s.end_step; ++t) {
      if (trace.steps[static_cast<std::size_t>(t)].concept_id != s.concept_id) return "step outside its span";
      if (trace.steps[static_cast<std::size_t>(t)].noop != s.noop) return "no-op flag mismatch";
    }
    cursor = s.end_step;
  }
  if (cursor != n) return "control spans do not cover the episode";
  // Siblings under one selector activation never overlap.
  for (std::size_t a = 0; a < trace.spans.size(); ++a) {
    for (std::size_t b = a + 1; b < trace.spans.size(); ++b) {
      const Span& x = trace.spans[a];
      const Span& y = trace.spans[b];
      if (x.parent != y.parent) continue;
      if (x.start_step < y.end_step && y.start_step < x.end_step) return "sibling spans overlap";
    }
  }
  return {};
}

}  // namespace cnrl::testing
