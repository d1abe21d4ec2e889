#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fedtrans/data/record.hpp"

namespace fedtrans::data {

/// Coefficients of one arm's potential-outcome function
///   mu_j(x) = intercept + sum_k numerical[k] x_k + sum_c categorical[c][level_c]
///             + interaction * x_a * x_b
struct ArmCoefficients {
  double intercept = 0.0;
  std::vector<double> numerical;
  std::vector<std::vector<double>> categorical;  // [feature][level]
  std::size_t interaction_a = 0;
  std::size_t interaction_b = 0;
  double interaction = 0.0;

  bool operator==(const ArmCoefficients&) const = default;
};

struct SyntheticDGPConfig {
  std::size_t records = 1000;
  std::size_t numerical_features = 6;
  std::size_t categorical_features = 0;
  std::size_t categorical_levels = 3;
  std::size_t treatments = 2;
  /// Scale of randomly drawn linear and categorical coefficients.
  double coefficient_scale = 0.5;
  /// Scale of randomly drawn per-arm intercepts.
  double intercept_scale = 1.0;
  double interaction_scale = 0.5;
  /// Multiplies the linear propensity score; 0 gives uniform assignment.
  double propensity_sharpness = 1.0;
  double noise = 0.1;
  std::uint64_t seed = 0;
  /// Explicit per-arm coefficients; drawn from `seed` when absent.
  std::optional<std::vector<ArmCoefficients>> arms;
  /// arm -> source arm whose outcome function it copies.
  std::map<std::size_t, std::size_t> twin_arms;

  void validate() const;
};

struct SyntheticDataset {
  DatasetSchema schema;
  std::vector<DataRecord> records;
  std::vector<ArmCoefficients> arms;
};

/// Feature names are num_<k> and cat_<c>; categorical levels are spelled alpha, bravo, ...
SyntheticDataset generate_synthetic(const SyntheticDGPConfig& config);

/// Evaluates mu_j on a record's covariates.
double potential_outcome(const ArmCoefficients& arm, const DataRecord& record,
                         std::size_t numerical_features, std::size_t categorical_features);

}  // namespace fedtrans::data
