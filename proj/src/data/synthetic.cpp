#include "fedtrans/data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "fedtrans/errors.hpp"
#include "fedtrans/numerics/rng.hpp"

namespace fedtrans::data {

namespace {

constexpr const char* kLevelNames[] = {"alpha", "bravo",  "charlie", "delta",  "echo",
                                       "foxtrot", "golf", "hotel",   "india",  "juliett",
                                       "kilo",  "lima",   "mike",    "november", "oscar",
                                       "papa"};
constexpr std::size_t kMaxLevels = sizeof(kLevelNames) / sizeof(kLevelNames[0]);

std::string numerical_name(std::size_t k) { return "num_" + std::to_string(k); }
std::string categorical_name(std::size_t c) { return "cat_" + std::to_string(c); }

std::size_t level_index(const std::string& level) {
  for (std::size_t i = 0; i < kMaxLevels; ++i) {
    if (level == kLevelNames[i]) return i;
  }
  throw ContractError("unknown synthetic level '" + level + "'");
}

}  // namespace

void SyntheticDGPConfig::validate() const {
  if (records == 0) throw ConfigurationError("synthetic config: records must be positive");
  if (treatments < 2) throw ConfigurationError("synthetic config: need at least 2 treatments");
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw ConfigurationError("synthetic config: noise must be finite and >= 0");
  }
  if (categorical_features > 0 && (categorical_levels < 2 || categorical_levels > kMaxLevels)) {
    throw ConfigurationError("synthetic config: categorical_levels must lie in [2, " +
                             std::to_string(kMaxLevels) + "]");
  }
  for (double v : {coefficient_scale, intercept_scale, interaction_scale, propensity_sharpness}) {
    if (!std::isfinite(v)) throw ConfigurationError("synthetic config: non-finite scale");
  }
  if (arms) {
    if (arms->size() != treatments) {
      throw ConfigurationError("synthetic config: expected coefficients for every arm");
    }
    for (const auto& a : *arms) {
      if (a.numerical.size() != numerical_features ||
          a.categorical.size() != categorical_features) {
        throw ConfigurationError("synthetic config: arm coefficient widths do not match");
      }
      for (const auto& c : a.categorical) {
        if (c.size() != categorical_levels) {
          throw ConfigurationError("synthetic config: categorical coefficient width mismatch");
        }
      }
      if (a.interaction != 0.0 &&
          (a.interaction_a >= numerical_features || a.interaction_b >= numerical_features)) {
        throw ConfigurationError("synthetic config: interaction index out of range");
      }
      bool finite = std::isfinite(a.intercept) && std::isfinite(a.interaction);
      for (double v : a.numerical) finite = finite && std::isfinite(v);
      if (!finite) throw ConfigurationError("synthetic config: non-finite coefficient");
    }
  }
  for (const auto& [arm, source] : twin_arms) {
    if (arm >= treatments || source >= treatments || arm == source) {
      throw ConfigurationError("synthetic config: invalid twin arm mapping");
    }
  }
}

double potential_outcome(const ArmCoefficients& arm, const DataRecord& record,
                         std::size_t numerical_features, std::size_t categorical_features) {
  std::vector<double> x(numerical_features);
  for (std::size_t k = 0; k < numerical_features; ++k) {
    x[k] = std::get<double>(record.covariates.at(numerical_name(k)));
  }
  double mu = arm.intercept;
  for (std::size_t k = 0; k < numerical_features; ++k) mu += arm.numerical[k] * x[k];
  for (std::size_t c = 0; c < categorical_features; ++c) {
    const auto& level = std::get<std::string>(record.covariates.at(categorical_name(c)));
    mu += arm.categorical[c][level_index(level)];
  }
  if (arm.interaction != 0.0) mu += arm.interaction * x[arm.interaction_a] * x[arm.interaction_b];
  return mu;
}

SyntheticDataset generate_synthetic(const SyntheticDGPConfig& config) {
  config.validate();
  const std::size_t p = config.numerical_features;
  const std::size_t q = config.categorical_features;
  const std::size_t K = config.treatments;
  numerics::Rng root(config.seed);

  SyntheticDataset ds;
  for (std::size_t k = 0; k < p; ++k) {
    ds.schema.features.push_back({numerical_name(k), tabular::FeatureKind::numerical});
  }
  for (std::size_t c = 0; c < q; ++c) {
    ds.schema.features.push_back({categorical_name(c), tabular::FeatureKind::categorical});
  }

  if (config.arms) {
    ds.arms = *config.arms;
  } else {
    numerics::Rng rng = root.split({1});
    for (std::size_t j = 0; j < K; ++j) {
      ArmCoefficients arm;
      arm.intercept = rng.normal(0.0, config.intercept_scale);
      for (std::size_t k = 0; k < p; ++k) arm.numerical.push_back(rng.normal(0.0, config.coefficient_scale));
      for (std::size_t c = 0; c < q; ++c) {
        std::vector<double> levels;
        for (std::size_t l = 0; l < config.categorical_levels; ++l) {
          levels.push_back(rng.normal(0.0, config.coefficient_scale));
        }
        arm.categorical.push_back(std::move(levels));
      }
      if (p >= 2) {
        arm.interaction_a = rng.index(p);
        arm.interaction_b = (arm.interaction_a + 1 + rng.index(p - 1)) % p;
        arm.interaction = rng.normal(0.0, config.interaction_scale);
      }
      ds.arms.push_back(std::move(arm));
    }
  }
  for (const auto& [arm, source] : config.twin_arms) ds.arms[arm] = ds.arms[source];

  // Linear propensity scores over the numerical covariates.
  numerics::Rng prop_rng = root.split({2});
  std::vector<std::vector<double>> propensity(K, std::vector<double>(p));
  for (auto& row : propensity) {
    for (auto& w : row) w = prop_rng.normal();
  }
  const double norm = p ? 1.0 / std::sqrt(static_cast<double>(p)) : 0.0;

  numerics::Rng rng = root.split({3});
  std::vector<double> scores(K);
  for (std::size_t i = 0; i < config.records; ++i) {
    DataRecord r;
    r.id = i;
    std::vector<double> x(p);
    for (std::size_t k = 0; k < p; ++k) {
      x[k] = rng.normal();
      r.covariates.emplace(numerical_name(k), x[k]);
    }
    for (std::size_t c = 0; c < q; ++c) {
      r.covariates.emplace(categorical_name(c),
                           std::string(kLevelNames[rng.index(config.categorical_levels)]));
    }
    double mx = -1e300;
    for (std::size_t j = 0; j < K; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += propensity[j][k] * x[k];
      scores[j] = config.propensity_sharpness * s * norm;
      mx = std::max(mx, scores[j]);
    }
    std::vector<double> weights(K);
    for (std::size_t j = 0; j < K; ++j) weights[j] = std::exp(scores[j] - mx);
    r.treatment = rng.categorical(weights);

    std::vector<double> mu(K);
    for (std::size_t j = 0; j < K; ++j) mu[j] = potential_outcome(ds.arms[j], r, p, q);
    const double eps = config.noise > 0.0 ? rng.normal(0.0, config.noise) : 0.0;
    r.outcome = mu[r.treatment] + eps;
    r.potential_outcomes = std::move(mu);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace fedtrans::data
