#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fedtrans::tabular {

enum class FeatureKind { categorical, numerical };

const char* to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& text);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;

  bool operator==(const FeatureSpec&) const = default;
};

/// Ordered covariate list of one site plus the treatment and outcome column names.
struct DatasetSchema {
  std::vector<FeatureSpec> features;
  std::string treatment_column = "treatment";
  std::string outcome_column = "outcome";

  /// Throws ConfigurationError on empty or duplicate names.
  void validate() const;
  std::optional<std::size_t> index_of(const std::string& feature) const;
  std::vector<std::string> feature_names() const;

  bool operator==(const DatasetSchema&) const = default;
};

/// Categorical covariates stay strings; numerical ones are 64-bit floats.
using CovariateValue = std::variant<std::string, double>;

}  // namespace fedtrans::tabular
