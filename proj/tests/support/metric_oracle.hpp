#pragma once

// Second implementation of the metric formulas, written per arm group rather than per record.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/numerics/rng.hpp"
#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::oracle {

struct MetricCase {
  std::vector<data::DataRecord> records;
  numerics::Tensor mu_hat;
  std::size_t arms = 0;
};

/// Random records with potential outcomes; every arm, including the control, appears at least
/// once when n >= arms.
inline MetricCase random_metric_case(numerics::Rng& rng, std::size_t n, std::size_t arms) {
  MetricCase c;
  c.arms = arms;
  c.mu_hat = numerics::Tensor({n, arms});
  for (std::size_t i = 0; i < n; ++i) {
    data::DataRecord r;
    r.id = i;
    r.treatment = i < arms ? i : rng.index(arms);
    std::vector<double> po(arms);
    for (auto& v : po) v = rng.normal(0.0, 2.0);
    r.outcome = po[r.treatment] + rng.normal(0.0, 0.1);
    r.potential_outcomes = po;
    for (std::size_t j = 0; j < arms; ++j) c.mu_hat.at(i, j) = po[j] + rng.normal(0.0, 0.5);
    c.records.push_back(r);
  }
  return c;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double brute_rmse_factual(const MetricCase& c) {
  std::vector<double> squared;
  for (std::size_t j = 0; j < c.arms; ++j) {
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      if (c.records[i].treatment != j) continue;
      squared.push_back(std::pow(c.records[i].outcome - c.mu_hat.at(i, j), 2));
    }
  }
  return std::sqrt(mean(squared));
}

inline std::vector<double> true_effects(const MetricCase& c, std::size_t j) {
  std::vector<double> tau;
  for (const auto& r : c.records) tau.push_back((*r.potential_outcomes)[j] - (*r.potential_outcomes)[0]);
  return tau;
}

inline std::vector<double> estimated_effects(const MetricCase& c, std::size_t j) {
  std::vector<double> tau;
  for (std::size_t i = 0; i < c.records.size(); ++i) tau.push_back(c.mu_hat.at(i, j) - c.mu_hat.at(i, 0));
  return tau;
}

inline double brute_pehe(const MetricCase& c, std::size_t j) {
  const auto t = true_effects(c, j), e = estimated_effects(c, j);
  std::vector<double> sq(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) sq[i] = (t[i] - e[i]) * (t[i] - e[i]);
  return mean(sq);
}

inline double brute_ate_error(const MetricCase& c, std::size_t j) {
  return mean(true_effects(c, j)) - mean(estimated_effects(c, j));
}

inline std::vector<double> group_outcomes(const MetricCase& c, std::size_t j) {
  std::vector<double> y;
  for (const auto& r : c.records) {
    if (r.treatment == j) y.push_back(r.outcome);
  }
  return y;
}

inline double brute_att(const MetricCase& c, std::size_t j) {
  return mean(group_outcomes(c, j)) - mean(group_outcomes(c, 0));
}

inline double brute_att_error(const MetricCase& c, std::size_t j) {
  std::vector<double> e;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    if (c.records[i].treatment == j) e.push_back(c.mu_hat.at(i, j) - c.mu_hat.at(i, 0));
  }
  return std::abs(brute_att(c, j) - mean(e));
}

}  // namespace fedtrans::oracle
