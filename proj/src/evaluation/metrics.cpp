#include "fedtrans/evaluation/metrics.hpp"

#include <cmath>

#include "fedtrans/errors.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::evaluation {

namespace {

void check_predictions(std::span<const DataRecord> records, const Tensor& mu_hat,
                       std::size_t needed_arms) {
  if (records.empty()) throw EmptyInputError("metrics need at least one record");
  if (mu_hat.rank() != 2 || mu_hat.dim(0) != records.size() || mu_hat.dim(1) < needed_arms) {
    throw DimensionError("predictions " + numerics::shape_to_string(mu_hat.shape()) + " do not cover " +
                         std::to_string(records.size()) + " records and " +
                         std::to_string(needed_arms) + " arms");
  }
}

const std::vector<double>& potential_outcomes(const DataRecord& r, std::size_t j,
                                              const char* metric) {
  if (!r.potential_outcomes || r.potential_outcomes->size() <= j) {
    throw MetricUnavailableError(std::string(metric) + " needs potential outcomes for arm " +
                                 std::to_string(j) + "; record " + std::to_string(r.id) +
                                 " has none");
  }
  return *r.potential_outcomes;
}

struct GroupMeans {
  double treated = 0.0;
  double control = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

GroupMeans group_means(std::span<const DataRecord> records, std::size_t j) {
  GroupMeans g;
  for (const auto& r : records) {
    if (r.treatment == j) {
      g.treated += r.outcome;
      ++g.n_treated;
    } else if (r.treatment == 0) {
      g.control += r.outcome;
      ++g.n_control;
    }
  }
  if (g.n_treated == 0) {
    throw MetricUnavailableError("ATT: no records assigned treatment " + std::to_string(j));
  }
  if (g.n_control == 0) throw MetricUnavailableError("ATT: no records assigned treatment 0");
  g.treated /= static_cast<double>(g.n_treated);
  g.control /= static_cast<double>(g.n_control);
  return g;
}

}  // namespace

double rmse_factual(std::span<const DataRecord> records, const Tensor& mu_hat) {
  check_predictions(records, mu_hat, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t t = records[i].treatment;
    if (t >= mu_hat.dim(1)) {
      throw DimensionError("record " + std::to_string(records[i].id) + " has treatment " +
                           std::to_string(t) + " outside the predicted arms");
    }
    const double e = records[i].outcome - mu_hat.at(i, t);
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(records.size()));
}

double pehe(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j) {
  check_predictions(records, mu_hat, j + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& mu = potential_outcomes(records[i], j, "PEHE");
    const double e = (mu[j] - mu[0]) - (mu_hat.at(i, j) - mu_hat.at(i, 0));
    sum += e * e;
  }
  return sum / static_cast<double>(records.size());
}

double ate_error(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j) {
  check_predictions(records, mu_hat, j + 1);
  double truth = 0.0, estimate = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& mu = potential_outcomes(records[i], j, "ATE error");
    truth += mu[j] - mu[0];
    estimate += mu_hat.at(i, j) - mu_hat.at(i, 0);
  }
  const double n = static_cast<double>(records.size());
  return truth / n - estimate / n;
}

double att(std::span<const DataRecord> records, std::size_t j) {
  const auto g = group_means(records, j);
  return g.treated - g.control;
}

double att_error(std::span<const DataRecord> records, const Tensor& mu_hat, std::size_t j) {
  check_predictions(records, mu_hat, j + 1);
  const auto g = group_means(records, j);
  double estimate = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].treatment == j) estimate += mu_hat.at(i, j) - mu_hat.at(i, 0);
  }
  return std::abs((g.treated - g.control) - estimate / static_cast<double>(g.n_treated));
}

SiteMetrics evaluate_records(std::size_t site, std::span<const DataRecord> records,
                             const Tensor& mu_hat) {
  check_predictions(records, mu_hat, 1);
  SiteMetrics m;
  m.site = site;
  m.records = records.size();
  m.rmse_factual = rmse_factual(records, mu_hat);
  bool counterfactuals = true;
  for (const auto& r : records) {
    if (!r.potential_outcomes || r.potential_outcomes->size() < mu_hat.dim(1)) {
      counterfactuals = false;
    }
  }
  for (std::size_t j = 1; j < mu_hat.dim(1); ++j) {
    TreatmentMetrics t;
    t.treatment = j;
    for (const auto& r : records) {
      if (r.treatment == j) ++t.treated;
      if (r.treatment == 0) ++t.control;
    }
    if (counterfactuals) {
      t.pehe = pehe(records, mu_hat, j);
      t.ate_error = ate_error(records, mu_hat, j);
    }
    if (t.treated > 0 && t.control > 0) {
      t.att = att(records, j);
      t.att_error = att_error(records, mu_hat, j);
    }
    m.treatments.push_back(t);
  }
  return m;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json site_json(const SiteMetrics& m) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& t : m.treatments) {
    arms.push_back({{"treatment", t.treatment},
                    {"treated", t.treated},
                    {"control", t.control},
                    {"pehe", optional_json(t.pehe)},
                    {"ate_error", optional_json(t.ate_error)},
                    {"abs_ate_error", t.ate_error ? nlohmann::json(std::abs(*t.ate_error))
                                                  : nlohmann::json(nullptr)},
                    {"att", optional_json(t.att)},
                    {"att_error", optional_json(t.att_error)}});
  }
  return {{"records", m.records}, {"rmse_factual", m.rmse_factual}, {"treatments", arms}};
}

std::string cell(const std::optional<double>& v) { return v ? text::format_double(*v) : ""; }

void append_rows(const std::string& label, const SiteMetrics& m, std::vector<std::string>& rows) {
  for (const auto& t : m.treatments) {
    const std::optional<double> abs_ate =
        t.ate_error ? std::optional<double>(std::abs(*t.ate_error)) : std::nullopt;
    rows.push_back(label + "," + std::to_string(t.treatment) + "," + std::to_string(m.records) +
                   "," + std::to_string(t.treated) + "," + text::format_double(m.rmse_factual) +
                   "," + cell(t.pehe) + "," + cell(t.ate_error) + "," + cell(abs_ate) + "," +
                   cell(t.att) + "," + cell(t.att_error));
  }
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : report.sites) {
    auto j = site_json(s);
    j["site"] = s.site;
    sites.push_back(j);
  }
  nlohmann::json out{{"sites", sites}};
  if (report.pooled) out["pooled"] = site_json(*report.pooled);
  return out;
}

std::string metrics_csv_header() {
  return "site,treatment,records,treated,rmse_factual,pehe,ate_error,abs_ate_error,att,att_error";
}

std::vector<std::string> metrics_csv_rows(const MetricsReport& report) {
  std::vector<std::string> rows;
  for (const auto& s : report.sites) append_rows(std::to_string(s.site), s, rows);
  if (report.pooled) append_rows("pooled", *report.pooled, rows);
  return rows;
}

}  // namespace fedtrans::evaluation
