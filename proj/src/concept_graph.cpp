#include "cnrl/concept_graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace cnrl {

// ---------------------------------------------------------------- features

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<Eigen::Index>(i)).second) {
      throw std::invalid_argument("duplicate feature name: " + names_[i]);
    }
  }
}

std::optional<Eigen::Index> FeatureSchema::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index FeatureSchema::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("unknown feature: " + std::string(name));
  return *i;
}

Features::Features(SchemaPtr s, Eigen::VectorXd v) : schema(std::move(s)), values(std::move(v)) {
  if (!schema || schema->size() != values.size()) {
    throw std::invalid_argument("feature values do not match their schema");
  }
}

std::optional<double> Features::get(std::string_view name) const {
  auto i = schema->find(name);
  if (!i) return std::nullopt;
  return values[*i];
}

// ---------------------------------------------------------------- enums

const char* to_string(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::Selector: return "selector";
    case ConceptKind::Control: return "control";
    case ConceptKind::Transformation: return "transformation";
  }
  return "?";
}

ConceptKind concept_kind_from_string(const std::string& s) {
  if (s == "selector") return ConceptKind::Selector;
  if (s == "control") return ConceptKind::Control;
  if (s == "transformation") return ConceptKind::Transformation;
  throw std::invalid_argument("unknown concept kind: " + s);
}

const char* to_string(TerminationKind kind) {
  switch (kind) {
    case TerminationKind::Goal: return "Goal";
    case TerminationKind::RegionExit: return "RegionExit";
    case TerminationKind::StepBudget: return "StepBudget";
    case TerminationKind::EpisodeEnd: return "EpisodeEnd";
  }
  return "?";
}

TerminationKind termination_kind_from_string(const std::string& s) {
  if (s == "Goal") return TerminationKind::Goal;
  if (s == "RegionExit") return TerminationKind::RegionExit;
  if (s == "StepBudget") return TerminationKind::StepBudget;
  if (s == "EpisodeEnd") return TerminationKind::EpisodeEnd;
  throw std::invalid_argument("unknown termination kind: " + s);
}

const char* to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
  }
  return "?";
}

CompareOp compare_op_from_string(const std::string& s) {
  if (s == "<") return CompareOp::Less;
  if (s == "<=") return CompareOp::LessEqual;
  if (s == ">") return CompareOp::Greater;
  if (s == ">=") return CompareOp::GreaterEqual;
  throw std::invalid_argument("unknown comparison operator: " + s);
}

const char* to_string(FeatureTerm::Kind kind) {
  switch (kind) {
    case FeatureTerm::Kind::Copy: return "copy";
    case FeatureTerm::Kind::SinCos: return "sincos";
    case FeatureTerm::Kind::Distance: return "distance";
    case FeatureTerm::Kind::Difference: return "difference";
  }
  return "?";
}

FeatureTerm::Kind feature_term_kind_from_string(const std::string& s) {
  if (s == "copy") return FeatureTerm::Kind::Copy;
  if (s == "sincos") return FeatureTerm::Kind::SinCos;
  if (s == "distance") return FeatureTerm::Kind::Distance;
  if (s == "difference") return FeatureTerm::Kind::Difference;
  throw std::invalid_argument("unknown feature term kind: " + s);
}

// ---------------------------------------------------------------- specs

namespace {

std::size_t expected_sources(FeatureTerm::Kind kind) {
  return (kind == FeatureTerm::Kind::Distance || kind == FeatureTerm::Kind::Difference) ? 2 : 1;
}

void check_term(const FeatureTerm& term) {
  if (term.sources.size() != expected_sources(term.kind)) {
    throw std::invalid_argument(std::string("feature term '") + to_string(term.kind) +
                                "' has the wrong number of sources");
  }
  if (term.kind != FeatureTerm::Kind::Copy && term.name.empty()) {
    throw std::invalid_argument(std::string("feature term '") + to_string(term.kind) +
                                "' needs an output name");
  }
}

std::vector<std::string> vector_components(const std::string& prefix) {
  return {prefix + "_x", prefix + "_y", prefix + "_z"};
}

}  // namespace

std::vector<std::string> output_names(const ObservationSpec& spec) {
  std::vector<std::string> out;
  for (const auto& term : spec.terms) {
    check_term(term);
    switch (term.kind) {
      case FeatureTerm::Kind::Copy:
        out.push_back(term.name.empty() ? term.sources[0] : term.name);
        break;
      case FeatureTerm::Kind::SinCos:
        out.push_back(term.name + "_sin");
        out.push_back(term.name + "_cos");
        break;
      case FeatureTerm::Kind::Distance:
        out.push_back(term.name);
        break;
      case FeatureTerm::Kind::Difference:
        for (auto& n : vector_components(term.name)) out.push_back(n);
        break;
    }
  }
  return out;
}

CompiledObservation::CompiledObservation(const ObservationSpec& spec, const SchemaPtr& input)
    : input_(input) {
  if (!spec.ref.empty()) {
    throw std::invalid_argument("observation spec reference '" + spec.ref +
                                "' must be resolved through a ConceptNetwork");
  }
  if (spec.identity) {
    identity_ = true;
    output_ = input;
    return;
  }
  auto need = [&](const std::string& name) {
    auto i = input->find(name);
    if (!i) throw std::out_of_range("missing source feature: " + name);
    return *i;
  };
  for (const auto& term : spec.terms) {
    check_term(term);
    Op op{term.kind, {}, term.scale};
    if (term.kind == FeatureTerm::Kind::Copy || term.kind == FeatureTerm::Kind::SinCos) {
      op.in.push_back(need(term.sources[0]));
    } else {
      for (const auto& src : term.sources)
        for (const auto& c : vector_components(src)) op.in.push_back(need(c));
    }
    ops_.push_back(std::move(op));
  }
  output_ = std::make_shared<FeatureSchema>(output_names(spec));
}

Observation CompiledObservation::apply(const Features& raw) const {
  if (raw.schema != input_ && !(raw.schema && *raw.schema == *input_)) {
    throw std::invalid_argument("observation applied to features of a different schema");
  }
  if (identity_) return raw;
  Eigen::VectorXd out(output_->size());
  Eigen::Index k = 0;
  constexpr double kDeg = std::numbers::pi / 180.0;
  for (const auto& op : ops_) {
    const auto& v = raw.values;
    switch (op.kind) {
      case FeatureTerm::Kind::Copy:
        out[k++] = op.scale * v[op.in[0]];
        break;
      case FeatureTerm::Kind::SinCos:
        out[k++] = op.scale * std::sin(v[op.in[0]] * kDeg);
        out[k++] = op.scale * std::cos(v[op.in[0]] * kDeg);
        break;
      case FeatureTerm::Kind::Distance: {
        const Eigen::Vector3d a(v[op.in[0]], v[op.in[1]], v[op.in[2]]);
        const Eigen::Vector3d b(v[op.in[3]], v[op.in[4]], v[op.in[5]]);
        out[k++] = op.scale * (a - b).norm();
        break;
      }
      case FeatureTerm::Kind::Difference:
        for (int c = 0; c < 3; ++c) out[k++] = op.scale * (v[op.in[c]] - v[op.in[3 + c]]);
        break;
    }
  }
  return Features(output_, std::move(out));
}

Observation apply_transformation(const ObservationSpec& spec, const Features& raw) {
  return CompiledObservation(spec, raw.schema).apply(raw);
}

Eigen::VectorXd apply_action_map(const ActionSpec& spec, const Eigen::VectorXd& partial) {
  if (spec.is_identity()) return partial;
  if (partial.size() != spec.partial_size()) {
    throw std::invalid_argument("action map expects " + std::to_string(spec.partial_size()) +
                                " learned components, got " + std::to_string(partial.size()));
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(spec.full_size);
  for (std::size_t i = 0; i < spec.learned.size(); ++i) full[spec.learned[i]] = partial[static_cast<Eigen::Index>(i)];
  for (const auto& p : spec.pinned) full[p.index] = p.value;
  return full;
}

// ---------------------------------------------------------------- predicates

bool holds(const Comparison& cmp, double value) {
  switch (cmp.op) {
    case CompareOp::Less: return value < cmp.threshold;
    case CompareOp::LessEqual: return value <= cmp.threshold;
    case CompareOp::Greater: return value > cmp.threshold;
    case CompareOp::GreaterEqual: return value >= cmp.threshold;
  }
  return false;
}

bool holds(const TerminalCondition& cond, const Observation& obs) {
  return std::all_of(cond.all.begin(), cond.all.end(),
                     [&](const Comparison& c) { return holds(c, obs[c.feature]); });
}

bool is_valid(const ValidityRegion& region, const Observation& obs) {
  bool inside = true;
  for (const auto& c : region.constraints) {
    const double x = obs[c.feature];  // throws on a missing feature
    inside = inside && x >= c.lower && x <= c.upper;
  }
  return inside;
}

CompiledRegion::CompiledRegion(const ValidityRegion& region, const FeatureSchema& schema) {
  for (const auto& c : region.constraints) bounds_.emplace_back(schema.index(c.feature), c);
}

bool CompiledRegion::contains(const Eigen::VectorXd& obs) const {
  return std::all_of(bounds_.begin(), bounds_.end(), [&](const auto& b) {
    const double x = obs[b.first];
    return x >= b.second.lower && x <= b.second.upper;
  });
}

CompiledCondition::CompiledCondition(const TerminalCondition& cond, const FeatureSchema& schema)
    : kind_(cond.kind) {
  for (const auto& c : cond.all) tests_.emplace_back(schema.index(c.feature), c);
}

bool CompiledCondition::holds(const Eigen::VectorXd& obs) const {
  return std::all_of(tests_.begin(), tests_.end(),
                     [&](const auto& t) { return cnrl::holds(t.second, obs[t.first]); });
}

// ---------------------------------------------------------------- network

namespace {

[[noreturn]] void reject(const std::string& what) { throw std::invalid_argument(what); }

void check_action_spec(const ConceptNode& node) {
  const auto& a = node.action_map;
  if (a.is_identity()) {
    if (!a.learned.empty() || !a.pinned.empty()) reject(node.id.str() + ": identity action map with components");
    return;
  }
  if (a.full_size < 0) reject(node.id.str() + ": negative action size");
  std::set<int> seen;
  auto claim = [&](int i) {
    if (i < 0 || i >= a.full_size) reject(node.id.str() + ": action component out of range");
    if (!seen.insert(i).second) reject(node.id.str() + ": action component mapped twice");
  };
  for (int i : a.learned) claim(i);
  for (const auto& p : a.pinned) claim(p.index);
}

}  // namespace

ConceptNetwork build_network(std::vector<ConceptNode> nodes) {
  ConceptNetwork net;
  const std::size_t n = nodes.size();
  if (n == 0) reject("concept network is empty");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = nodes[i].id;
    if (id.empty()) reject("concept id must be non-empty");
    if (!net.index_.emplace(id.str(), i).second) reject("duplicate concept id: " + id.str());
  }

  // Resolve state maps and check node-local rules.
  net.resolved_state_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes[i];
    const std::string& name = node.id.str();
    ObservationSpec spec = node.state_map;
    if (!spec.ref.empty()) {
      auto it = net.index_.find(spec.ref);
      if (it == net.index_.end()) reject(name + ": state map references unknown node " + spec.ref);
      const auto& target = nodes[it->second];
      if (target.kind != ConceptKind::Transformation)
        reject(name + ": state map reference " + spec.ref + " is not a transformation");
      if (!target.state_map.ref.empty()) reject(spec.ref + ": transformation state map cannot be a reference");
      spec = target.state_map;
    }
    net.resolved_state_[i] = spec;

    switch (node.kind) {
      case ConceptKind::Selector:
        if (node.children.size() < 2) reject(name + ": selector needs at least two children");
        break;
      case ConceptKind::Control:
        if (!node.children.empty()) reject(name + ": control concept cannot have children");
        if (node.max_steps < 1 || node.max_steps > kSubConceptStepCap)
          reject(name + ": max_steps must lie in [1, " + std::to_string(kSubConceptStepCap) + "]");
        break;
      case ConceptKind::Transformation:
        if (!node.children.empty()) reject(name + ": transformation cannot have children");
        if (!node.policy.kind.empty()) reject(name + ": transformation cannot own a policy");
        if (!node.terminal.empty()) reject(name + ": transformation cannot have terminal conditions");
        if (!node.validity.constraints.empty()) reject(name + ": transformation cannot have a validity region");
        break;
    }
    if (node.kind != ConceptKind::Control) {
      if (!node.validity.constraints.empty() || node.eval_validity)
        reject(name + ": only control concepts have validity regions");
      if (!node.terminal.empty() && node.kind == ConceptKind::Selector)
        reject(name + ": only control concepts have terminal conditions");
    }
    check_action_spec(node);

    // Feature names used by validity and terminals must be observable.
    std::optional<std::unordered_set<std::string>> visible;
    if (!spec.identity) {
      auto names = output_names(spec);
      visible.emplace(names.begin(), names.end());
    }
    auto check_feature = [&](const std::string& f) {
      if (visible && !visible->contains(f)) reject(name + ": feature '" + f + "' is not in its observation spec");
    };
    auto check_region = [&](const ValidityRegion& r) {
      for (const auto& c : r.constraints) {
        if (!(c.lower <= c.upper)) reject(name + ": validity interval for '" + c.feature + "' has lower > upper");
        check_feature(c.feature);
      }
    };
    check_region(node.validity);
    if (node.eval_validity) check_region(*node.eval_validity);
    for (const auto& t : node.terminal)
      for (const auto& c : t.all) check_feature(c.feature);
  }

  // Child edges.
  net.child_index_.assign(n, {});
  net.has_parent_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& child : nodes[i].children) {
      auto it = net.index_.find(child.str());
      if (it == net.index_.end()) reject(nodes[i].id.str() + ": dangling child reference " + child.str());
      if (nodes[it->second].kind == ConceptKind::Transformation)
        reject(nodes[i].id.str() + ": transformation " + child.str() + " cannot be selected");
      net.child_index_[i].push_back(it->second);
    }
  }

  // Cycle detection (iterative three-color DFS).
  std::vector<int> color(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (color[s] != 0) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{s, 0}};
    color[s] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < net.child_index_[v].size()) {
        const std::size_t w = net.child_index_[v][next++];
        if (color[w] == 1) reject("cycle detected through concept " + nodes[w].id.str());
        if (color[w] == 0) {
          color[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c : net.child_index_[i]) net.has_parent_[c] = true;
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i)
    if (nodes[i].kind != ConceptKind::Transformation && !net.has_parent_[i]) roots.push_back(i);
  if (roots.empty()) reject("concept network has no root");
  if (roots.size() > 1) {
    std::string names;
    for (auto r : roots) names += " " + nodes[r].id.str();
    reject("concept network has multiple roots:" + names);
  }
  net.root_ = roots.front();

  std::function<int(std::size_t)> height = [&](std::size_t v) {
    int h = 0;
    for (auto c : net.child_index_[v]) h = std::max(h, height(c));
    return h + 1;
  };
  net.depth_ = height(net.root_) - 1;
  net.nodes_ = std::move(nodes);
  return net;
}

std::optional<std::size_t> ConceptNetwork::find(const ConceptId& id) const {
  auto it = index_.find(id.str());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ConceptNetwork::index_of(const ConceptId& id) const {
  auto i = find(id);
  if (!i) throw std::out_of_range("unknown concept: " + id.str());
  return *i;
}

std::vector<ConceptId> ConceptNetwork::training_order(const ConceptId& id) const {
  std::vector<ConceptId> order;
  std::vector<bool> seen(nodes_.size(), false);
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    if (seen[v]) return;
    seen[v] = true;
    for (auto c : child_index_[v]) visit(c);
    order.push_back(nodes_[v].id);
  };
  visit(index_of(id));
  return order;
}

ConceptNetwork ConceptNetwork::subnetwork(const ConceptId& id) const {
  std::vector<ConceptNode> keep;
  std::set<std::string> refs;
  for (const auto& cid : training_order(id)) {
    const auto& node = this->node(cid);
    if (!node.state_map.ref.empty()) refs.insert(node.state_map.ref);
    keep.push_back(node);
  }
  for (const auto& r : refs) keep.push_back(this->node(ConceptId(r)));
  std::rotate(keep.begin(), keep.end() - static_cast<std::ptrdiff_t>(refs.size()), keep.end());
  return build_network(std::move(keep));
}

}  // namespace cnrl
