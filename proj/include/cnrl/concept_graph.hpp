#pragma once

// Concept network data model: selector, control and transformation nodes,
// validity regions, terminal predicates, and the state/action maps that adapt
// the raw environment to each concept.

#include "cnrl/features.hpp"

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cnrl {

/// Sub-concepts run at most this many steps per activation.
inline constexpr int kSubConceptStepCap = 50;
/// Full-task episodes end after this many environment steps.
inline constexpr int kGlobalStepCap = 150;

class ConceptId {
 public:
  ConceptId() = default;
  explicit ConceptId(std::string name) : name_(std::move(name)) {}

  const std::string& str() const { return name_; }
  bool empty() const { return name_.empty(); }

  auto operator<=>(const ConceptId&) const = default;

 private:
  std::string name_;
};

enum class ConceptKind { Selector, Control, Transformation };

enum class TerminationKind { Goal, RegionExit, StepBudget, EpisodeEnd };

const char* to_string(ConceptKind kind);
const char* to_string(TerminationKind kind);
ConceptKind concept_kind_from_string(const std::string& s);
TerminationKind termination_kind_from_string(const std::string& s);

struct Interval {
  std::string feature;
  double lower = 0.0;
  double upper = 0.0;

  bool operator==(const Interval&) const = default;
};

/// Axis-aligned box over named observation features. Empty means valid everywhere.
struct ValidityRegion {
  std::vector<Interval> constraints;

  bool operator==(const ValidityRegion&) const = default;
};

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual };

const char* to_string(CompareOp op);
CompareOp compare_op_from_string(const std::string& s);

struct Comparison {
  std::string feature;
  CompareOp op = CompareOp::Less;
  double threshold = 0.0;

  bool operator==(const Comparison&) const = default;
};

/// Fires when every comparison holds.
struct TerminalCondition {
  TerminationKind kind = TerminationKind::Goal;
  std::vector<Comparison> all;

  bool operator==(const TerminalCondition&) const = default;
};

/// One output block of an observation spec. Vector-valued sources name a
/// prefix `p` and read `p_x`, `p_y`, `p_z`.
struct FeatureTerm {
  enum class Kind { Copy, SinCos, Distance, Difference };

  Kind kind = Kind::Copy;
  std::vector<std::string> sources;
  std::string name;  // output name (Copy defaults to the source name)
  double scale = 1.0;

  bool operator==(const FeatureTerm&) const = default;
};

const char* to_string(FeatureTerm::Kind kind);
FeatureTerm::Kind feature_term_kind_from_string(const std::string& s);

struct ObservationSpec {
  bool identity = true;
  std::vector<FeatureTerm> terms;
  std::string ref;  // id of a Transformation node supplying the observation spec

  bool operator==(const ObservationSpec&) const = default;

  static ObservationSpec identity_spec() { return {}; }
  static ObservationSpec from_terms(std::vector<FeatureTerm> terms) {
    ObservationSpec s;
    s.identity = false;
    s.terms = std::move(terms);
    return s;
  }
  static ObservationSpec reference(std::string node) {
    ObservationSpec s;
    s.identity = false;
    s.ref = std::move(node);
    return s;
  }
};

/// Output names of a non-identity spec, in output order.
std::vector<std::string> output_names(const ObservationSpec& spec);

struct PinnedComponent {
  int index = 0;
  double value = 0.0;

  bool operator==(const PinnedComponent&) const = default;
};

/// Embeds a concept's partial action into the full action vector. full_size
/// of 0 is the identity map.
struct ActionSpec {
  int full_size = 0;
  std::vector<int> learned;
  std::vector<PinnedComponent> pinned;

  bool operator==(const ActionSpec&) const = default;

  bool is_identity() const { return full_size == 0; }
  int partial_size() const { return static_cast<int>(learned.size()); }
};

struct PolicyRef {
  std::string kind;        // "scripted", "dqn", "tabular", "cem", or empty
  std::string name;        // scripted controller name
  std::vector<double> params;
  std::string checkpoint;  // path to a saved policy

  bool operator==(const PolicyRef&) const = default;
};

struct ConceptNode {
  ConceptId id;
  ConceptKind kind = ConceptKind::Control;
  std::vector<ConceptId> children;
  ValidityRegion validity;
  std::optional<ValidityRegion> eval_validity;  // replaces `validity` in eval mode
  std::vector<TerminalCondition> terminal;
  int max_steps = kSubConceptStepCap;
  PolicyRef policy;
  ObservationSpec state_map;
  ActionSpec action_map;
  std::string reward;  // reward function id used when training this node

  bool operator==(const ConceptNode&) const = default;
};

/// Immutable, validated concept DAG.
class ConceptNetwork {
 public:
  const std::vector<ConceptNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  const ConceptNode& root() const { return nodes_[root_]; }
  std::size_t root_index() const { return root_; }

  std::optional<std::size_t> find(const ConceptId& id) const;
  std::size_t index_of(const ConceptId& id) const;
  const ConceptNode& node(const ConceptId& id) const { return nodes_[index_of(id)]; }
  const ConceptNode& node(std::size_t i) const { return nodes_[i]; }

  const std::vector<std::size_t>& children(std::size_t i) const { return child_index_[i]; }
  bool has_parent(std::size_t i) const { return has_parent_[i]; }
  int depth() const { return depth_; }

  /// The state map of node i with transformation references resolved.
  const ObservationSpec& observation_spec(std::size_t i) const { return resolved_state_[i]; }

  /// Selector and control nodes reachable from `id`, children before parents.
  std::vector<ConceptId> training_order(const ConceptId& id) const;
  std::vector<ConceptId> training_order() const { return training_order(root().id); }

  /// The network rooted at `id`, with referenced transformation nodes kept.
  ConceptNetwork subnetwork(const ConceptId& id) const;

 private:
  friend ConceptNetwork build_network(std::vector<ConceptNode> nodes);

  std::vector<ConceptNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> child_index_;
  std::vector<bool> has_parent_;
  std::vector<ObservationSpec> resolved_state_;
  std::size_t root_ = 0;
  int depth_ = 0;
};

/// Validates and freezes a node list. Throws std::invalid_argument on duplicate
/// or empty ids, dangling children, cycles, multiple roots, selectors with
/// fewer than two children, impure transformations, bad step budgets, and
/// validity/terminal features missing from a node's observation spec.
ConceptNetwork build_network(std::vector<ConceptNode> nodes);

/// True iff every constrained feature of `obs` lies in its closed interval.
/// Throws std::out_of_range if a constrained feature is missing.
bool is_valid(const ValidityRegion& region, const Observation& obs);

bool holds(const Comparison& cmp, double value);
bool holds(const TerminalCondition& cond, const Observation& obs);

Observation apply_transformation(const ObservationSpec& spec, const Features& raw);

/// Throws std::invalid_argument on arity mismatch.
Eigen::VectorXd apply_action_map(const ActionSpec& spec, const Eigen::VectorXd& partial);

/// An observation spec resolved against one input schema, for repeated use.
class CompiledObservation {
 public:
  CompiledObservation(const ObservationSpec& spec, const SchemaPtr& input);

  const SchemaPtr& output_schema() const { return output_; }
  Observation apply(const Features& raw) const;

 private:
  struct Op {
    FeatureTerm::Kind kind;
    std::vector<Eigen::Index> in;
    double scale;
  };
  bool identity_ = false;
  SchemaPtr input_;
  SchemaPtr output_;
  std::vector<Op> ops_;
};

/// A validity region or terminal predicate with feature names resolved to indices.
class CompiledRegion {
 public:
  CompiledRegion() = default;
  CompiledRegion(const ValidityRegion& region, const FeatureSchema& schema);
  bool contains(const Eigen::VectorXd& obs) const;

 private:
  std::vector<std::pair<Eigen::Index, Interval>> bounds_;
};

class CompiledCondition {
 public:
  CompiledCondition(const TerminalCondition& cond, const FeatureSchema& schema);
  TerminationKind kind() const { return kind_; }
  bool holds(const Eigen::VectorXd& obs) const;

 private:
  TerminationKind kind_;
  std::vector<std::pair<Eigen::Index, Comparison>> tests_;
};

}  // namespace cnrl

template <>
struct std::hash<cnrl::ConceptId> {
  std::size_t operator()(const cnrl::ConceptId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
