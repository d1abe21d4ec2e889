#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedtrans/tabular/schema.hpp"

namespace fedtrans::data {

using tabular::CovariateValue;
using tabular::DatasetSchema;

/// One subject: covariates by feature name, the assigned treatment and its factual outcome.
/// Synthetic records also carry every arm's potential outcome.
struct DataRecord {
  std::size_t id = 0;
  std::map<std::string, CovariateValue> covariates;
  std::size_t treatment = 0;
  double outcome = 0.0;
  std::optional<std::vector<double>> potential_outcomes;

  bool operator==(const DataRecord&) const = default;
};

/// A site's records after the 70:15:15 split.
struct SiteDataset {
  std::size_t site_id = 0;
  DatasetSchema schema;
  std::vector<DataRecord> train;
  std::vector<DataRecord> val;
  std::vector<DataRecord> test;

  /// Sorted treatment ids present in any split.
  std::vector<std::size_t> local_treatments() const;
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

}  // namespace fedtrans::data
