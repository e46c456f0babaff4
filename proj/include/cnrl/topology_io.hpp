#pragma once

// Concept networks as JSON text: one record per node under "nodes".

#include "cnrl/concept_graph.hpp"

#include <string>
#include <vector>

namespace cnrl {

/// Parses and validates a topology document. Throws std::invalid_argument on
/// malformed JSON, unknown field values, or an invalid network.
ConceptNetwork parse_topology(const std::string& text);
std::vector<ConceptNode> parse_nodes(const std::string& text);

/// Pretty-printed document; parse_topology(write_topology(n)) rebuilds an equal network.
std::string write_topology(const ConceptNetwork& net);
std::string write_nodes(const std::vector<ConceptNode>& nodes);

ConceptNetwork load_topology_file(const std::string& path);
void save_topology_file(const std::string& path, const ConceptNetwork& net);

}  // namespace cnrl
