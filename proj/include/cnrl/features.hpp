#pragma once

// Named feature vectors. Environments publish their raw state as a Features
// value; transformations produce new Features with their own schema.

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cnrl {

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<std::string> names);

  Eigen::Index size() const { return static_cast<Eigen::Index>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(Eigen::Index i) const { return names_[static_cast<std::size_t>(i)]; }

  std::optional<Eigen::Index> find(std::string_view name) const;
  /// Throws std::out_of_range for unknown names.
  Eigen::Index index(std::string_view name) const;

  bool operator==(const FeatureSchema& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

using SchemaPtr = std::shared_ptr<const FeatureSchema>;

struct Features {
  SchemaPtr schema;
  Eigen::VectorXd values;

  Features() = default;
  Features(SchemaPtr s, Eigen::VectorXd v);

  Eigen::Index size() const { return values.size(); }
  double operator[](std::string_view name) const { return values[schema->index(name)]; }
  std::optional<double> get(std::string_view name) const;
};

/// A concept's transformed view of the state.
using Observation = Features;

}  // namespace cnrl
