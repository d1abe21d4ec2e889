#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtrans/data/record.hpp"
#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::evaluation {

using data::DataRecord;
using numerics::Tensor;

// Every metric takes mu_hat as an [n x K] matrix of predicted outcomes, row i for records[i].
// Treatment 0 is the control arm.

/// Root mean squared error of each record's assigned-arm prediction against its factual outcome.
double rmse_factual(std::span<const DataRecord> records, const Tensor& mu_hat);

/// Mean squared error of the estimated effect of arm j over arm 0. Needs potential outcomes.
double pehe(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j);

/// True mean effect minus estimated mean effect of arm j over arm 0 (signed).
double ate_error(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j);

/// Mean factual outcome of the j group minus that of the control group.
double att(std::span<const DataRecord> records, std::size_t j);

/// |att(j) - mean estimated effect over records assigned j|.
double att_error(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j);

struct TreatmentMetrics {
  std::size_t treatment = 0;
  std::size_t treated = 0;  // records assigned this arm
  std::size_t control = 0;  // records assigned arm 0
  std::optional<double> pehe;
  std::optional<double> ate_error;  // signed
  std::optional<double> att;
  std::optional<double> att_error;

  bool operator==(const TreatmentMetrics&) const = default;
};

struct SiteMetrics {
  std::size_t site = 0;
  std::size_t records = 0;
  double rmse_factual = 0.0;
  std::vector<TreatmentMetrics> treatments;  // arms 1..K-1

  bool operator==(const SiteMetrics&) const = default;
};

/// Every metric that the records support; unavailable metrics are left empty.
SiteMetrics evaluate_records(std::size_t site, std::span<const DataRecord> records,
                             const Tensor& mu_hat);

struct MetricsReport {
  std::vector<SiteMetrics> sites;
  /// All sites' records evaluated together, each under its own site's predictions.
  std::optional<SiteMetrics> pooled;

  bool operator==(const MetricsReport&) const = default;
};

nlohmann::json to_json(const MetricsReport& report);

/// Flat table: one row per (site, arm), the pooled rows last with site "pooled".
std::string metrics_csv_header();
std::vector<std::string> metrics_csv_rows(const MetricsReport& report);

}  // namespace fedtrans::evaluation
