#include "fedtrans/tabular/schema.hpp"

#include <set>

#include "fedtrans/errors.hpp"

namespace fedtrans::tabular {

const char* to_string(FeatureKind kind) {
  return kind == FeatureKind::categorical ? "categorical" : "numerical";
}

FeatureKind parse_feature_kind(const std::string& text) {
  if (text == "categorical") return FeatureKind::categorical;
  if (text == "numerical") return FeatureKind::numerical;
  throw ConfigurationError("unknown feature kind '" + text +
                           "' (expected categorical or numerical)");
}

void DatasetSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw ConfigurationError("schema contains an empty feature name");
    if (!seen.insert(f.name).second) {
      throw ConfigurationError("schema lists feature '" + f.name + "' twice");
    }
  }
  if (treatment_column.empty() || outcome_column.empty()) {
    throw ConfigurationError("schema needs treatment and outcome column names");
  }
  if (seen.contains(treatment_column) || seen.contains(outcome_column) ||
      treatment_column == outcome_column) {
    throw ConfigurationError("treatment/outcome columns collide with other schema columns");
  }
}

std::optional<std::size_t> DatasetSchema::index_of(const std::string& feature) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == feature) return i;
  }
  return std::nullopt;
}

std::vector<std::string> DatasetSchema::feature_names() const {
  std::vector<std::string> names;
  names.reserve(features.size());
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

}  // namespace fedtrans::tabular
