#include "cnrl/topology_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cnrl {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "cnrl.topology";
constexpr int kVersion = 1;

json region_to_json(const ValidityRegion& region) {
  json out = json::array();
  for (const auto& c : region.constraints) {
    out.push_back({{"feature", c.feature}, {"lower", c.lower}, {"upper", c.upper}});
  }
  return out;
}

ValidityRegion region_from_json(const json& j) {
  ValidityRegion region;
  for (const auto& c : j) {
    region.constraints.push_back({c.at("feature").get<std::string>(), c.at("lower").get<double>(),
                                  c.at("upper").get<double>()});
  }
  return region;
}

json terminal_to_json(const TerminalCondition& cond) {
  json all = json::array();
  for (const auto& c : cond.all) {
    all.push_back({{"feature", c.feature}, {"op", to_string(c.op)}, {"threshold", c.threshold}});
  }
  return {{"kind", to_string(cond.kind)}, {"all", all}};
}

TerminalCondition terminal_from_json(const json& j) {
  TerminalCondition cond;
  cond.kind = termination_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& c : j.at("all")) {
    cond.all.push_back({c.at("feature").get<std::string>(), compare_op_from_string(c.at("op").get<std::string>()),
                        c.at("threshold").get<double>()});
  }
  return cond;
}

json spec_to_json(const ObservationSpec& spec) {
  if (spec.identity) return "identity";
  if (!spec.ref.empty()) return {{"ref", spec.ref}};
  json terms = json::array();
  for (const auto& t : spec.terms) {
    json jt = {{"kind", to_string(t.kind)}, {"sources", t.sources}};
    if (!t.name.empty()) jt["name"] = t.name;
    if (t.scale != 1.0) jt["scale"] = t.scale;
    terms.push_back(std::move(jt));
  }
  return {{"terms", terms}};
}

ObservationSpec spec_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw std::invalid_argument("state_map must be \"identity\" or an object");
    return ObservationSpec::identity_spec();
  }
  if (j.contains("ref")) return ObservationSpec::reference(j.at("ref").get<std::string>());
  std::vector<FeatureTerm> terms;
  for (const auto& jt : j.at("terms")) {
    FeatureTerm t;
    t.kind = feature_term_kind_from_string(jt.at("kind").get<std::string>());
    t.sources = jt.at("sources").get<std::vector<std::string>>();
    t.name = jt.value("name", std::string{});
    t.scale = jt.value("scale", 1.0);
    terms.push_back(std::move(t));
  }
  return ObservationSpec::from_terms(std::move(terms));
}

json action_to_json(const ActionSpec& spec) {
  if (spec.is_identity()) return "identity";
  json pinned = json::array();
  for (const auto& p : spec.pinned) pinned.push_back({{"index", p.index}, {"value", p.value}});
  return {{"full_size", spec.full_size}, {"learned", spec.learned}, {"pinned", pinned}};
}

ActionSpec action_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw std::invalid_argument("action_map must be \"identity\" or an object");
    return {};
  }
  ActionSpec spec;
  spec.full_size = j.at("full_size").get<int>();
  spec.learned = j.at("learned").get<std::vector<int>>();
  for (const auto& p : j.value("pinned", json::array())) {
    spec.pinned.push_back({p.at("index").get<int>(), p.at("value").get<double>()});
  }
  return spec;
}

json policy_to_json(const PolicyRef& p) {
  json out = json::object();
  if (!p.kind.empty()) out["kind"] = p.kind;
  if (!p.name.empty()) out["name"] = p.name;
  if (!p.params.empty()) out["params"] = p.params;
  if (!p.checkpoint.empty()) out["checkpoint"] = p.checkpoint;
  return out;
}

PolicyRef policy_from_json(const json& j) {
  PolicyRef p;
  p.kind = j.value("kind", std::string{});
  p.name = j.value("name", std::string{});
  p.params = j.value("params", std::vector<double>{});
  p.checkpoint = j.value("checkpoint", std::string{});
  return p;
}

json node_to_json(const ConceptNode& n) {
  json j = {{"id", n.id.str()}, {"kind", to_string(n.kind)}};
  if (!n.children.empty()) {
    json children = json::array();
    for (const auto& c : n.children) children.push_back(c.str());
    j["children"] = children;
  }
  if (!n.validity.constraints.empty()) j["validity"] = region_to_json(n.validity);
  if (n.eval_validity) j["eval_validity"] = region_to_json(*n.eval_validity);
  if (!n.terminal.empty()) {
    json terms = json::array();
    for (const auto& t : n.terminal) terms.push_back(terminal_to_json(t));
    j["terminal"] = terms;
  }
  if (n.max_steps != kSubConceptStepCap) j["max_steps"] = n.max_steps;
  if (!(n.policy == PolicyRef{})) j["policy"] = policy_to_json(n.policy);
  j["state_map"] = spec_to_json(n.state_map);
  j["action_map"] = action_to_json(n.action_map);
  if (!n.reward.empty()) j["reward"] = n.reward;
  return j;
}

ConceptNode node_from_json(const json& j) {
  ConceptNode n;
  n.id = ConceptId(j.at("id").get<std::string>());
  n.kind = concept_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& c : j.value("children", json::array())) n.children.emplace_back(c.get<std::string>());
  if (j.contains("validity")) n.validity = region_from_json(j.at("validity"));
  if (j.contains("eval_validity")) n.eval_validity = region_from_json(j.at("eval_validity"));
  for (const auto& t : j.value("terminal", json::array())) n.terminal.push_back(terminal_from_json(t));
  n.max_steps = j.value("max_steps", kSubConceptStepCap);
  if (j.contains("policy")) n.policy = policy_from_json(j.at("policy"));
  if (j.contains("state_map")) n.state_map = spec_from_json(j.at("state_map"));
  if (j.contains("action_map")) n.action_map = action_from_json(j.at("action_map"));
  n.reward = j.value("reward", std::string{});
  return n;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<ConceptNode> parse_nodes(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{kFormat}) != kFormat) {
      throw std::invalid_argument("not a topology document");
    }
    if (doc.value("version", kVersion) != kVersion) {
      throw std::invalid_argument("unsupported topology version");
    }
    std::vector<ConceptNode> nodes;
    for (const auto& jn : doc.at("nodes")) nodes.push_back(node_from_json(jn));
    return nodes;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("topology: ") + e.what());
  }
}

ConceptNetwork parse_topology(const std::string& text) { return build_network(parse_nodes(text)); }

std::string write_nodes(const std::vector<ConceptNode>& nodes) {
  json arr = json::array();
  for (const auto& n : nodes) arr.push_back(node_to_json(n));
  const json doc = {{"format", kFormat}, {"version", kVersion}, {"nodes", arr}};
  return doc.dump(2) + "\n";
}

std::string write_topology(const ConceptNetwork& net) { return write_nodes(net.nodes()); }

ConceptNetwork load_topology_file(const std::string& path) { return parse_topology(read_file(path)); }

void save_topology_file(const std::string& path, const ConceptNetwork& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << write_topology(net);
}

}  // namespace cnrl
