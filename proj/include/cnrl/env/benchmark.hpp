#pragma once

// Concept networks for the grasp-and-stack benchmark: the five control
// concepts, the flat and nested selector topologies, and a monolithic
// baseline whose children are one-step translation primitives.

#include "cnrl/concept_graph.hpp"
#include "cnrl/env/grasp_stack.hpp"
#include "cnrl/execution.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cnrl {

/// Selector view: pinch, prism and cube positions, pinch-to-prism and
/// prism-to-cube distances (lengths scaled by 3), and the held flag.
ObservationSpec selector_observation();

/// staging1, orient, lift, staging2, stack with scripted policy references.
std::vector<ConceptNode> leaf_nodes(const GraspStackConfig& cfg);

/// root -> {staging1, orient, lift, staging2, stack}
std::vector<ConceptNode> flat_nodes(const GraspStackConfig& cfg);
ConceptNetwork flat_network(const GraspStackConfig& cfg);

/// root -> {staging1, grasp, staging2, stack}; grasp -> {orient, lift}
std::vector<ConceptNode> tree_nodes(const GraspStackConfig& cfg);
ConceptNetwork tree_network(const GraspStackConfig& cfg);

/// root -> 27 one-step children moving at `speed` along each axis in
/// {-speed, 0, +speed}, with automatic yaw servo and closing fingers.
std::vector<ConceptNode> monolith_nodes(const GraspStackConfig& cfg, double speed = 0.2);
ConceptNetwork monolith_network(const GraspStackConfig& cfg, double speed = 0.2);

/// Termination of the named leaf concept after `span_steps` steps of its
/// activation, checked Goal, RegionExit, StepBudget in that order. Throws
/// std::invalid_argument for an unknown concept.
std::optional<TerminationKind> terminal_check(const std::string& concept_name, const Features& raw, int span_steps,
                                              const GraspStackConfig& cfg);

/// Policy for a control node whose reference is scripted.
std::shared_ptr<ControlPolicy> make_scripted_policy(const ConceptNode& node, const GraspStackConfig& cfg);

/// Binds every scripted control node of `net`.
void bind_scripted(const ConceptNetwork& net, const GraspStackConfig& cfg, PolicyBindings& bindings);

/// The sub-task in which a concept is trained, or nullopt for unknown ids.
std::optional<Task> training_task(const std::string& concept_name);

}  // namespace cnrl
