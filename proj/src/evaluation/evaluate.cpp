#include "fedtrans/evaluation/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "fedtrans/errors.hpp"

namespace fedtrans::evaluation {

const std::vector<DataRecord>& split_records(const data::SiteDataset& site, Split split) {
  switch (split) {
    case Split::train:
      return site.train;
    case Split::val:
      return site.val;
    case Split::test:
      break;
  }
  return site.test;
}

MetricsReport evaluate_model(const federation::TrainedModel& model, Split split) {
  return evaluate_models(std::span(&model, 1), split);
}

MetricsReport evaluate_models(std::span<const federation::TrainedModel> models, Split split) {
  MetricsReport report;
  std::vector<DataRecord> pooled_records;
  std::vector<double> pooled_values;
  std::size_t arms = 0;
  for (const auto& model : models) {
    const auto& best = model.result.best;
    for (const auto& site : model.sites) {
      const auto& records = split_records(site.data, split);
      if (records.empty()) continue;
      const Tensor mu_hat = model::predict_potential_outcomes(
          records, best.global, best.heads.at(site.data.site_id), site.pipeline);
      report.sites.push_back(evaluate_records(site.data.site_id, records, mu_hat));
      pooled_records.insert(pooled_records.end(), records.begin(), records.end());
      pooled_values.insert(pooled_values.end(), mu_hat.data().begin(), mu_hat.data().end());
      arms = mu_hat.dim(1);
    }
  }
  if (report.sites.empty()) throw EmptyInputError("no site has records in the evaluated split");
  report.pooled = evaluate_records(
      0, pooled_records, Tensor({pooled_records.size(), arms}, std::move(pooled_values)));
  return report;
}

namespace {

struct ArmScore {
  double rmse = 0.0;
  std::vector<std::size_t> ids;
};

ArmScore held_out_rmse(const federation::TrainedModel& model, std::size_t held_out) {
  ArmScore score;
  double sum = 0.0;
  for (const auto& site : model.sites) {
    std::vector<DataRecord> records;
    for (const auto& r : site.data.test) {
      if (r.treatment == held_out) records.push_back(r);
    }
    if (records.empty()) continue;
    const auto pred =
        model::predict_factual(records, model.result.best.global,
                               model.result.best.heads.at(site.data.site_id), site.pipeline);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const double e = pred[i] - records[i].outcome;
      sum += e * e;
      score.ids.push_back(records[i].id);
    }
  }
  if (score.ids.empty()) {
    throw EmptyInputError("no test record is assigned held-out treatment " +
                          std::to_string(held_out));
  }
  score.rmse = std::sqrt(sum / static_cast<double>(score.ids.size()));
  std::sort(score.ids.begin(), score.ids.end());
  return score;
}

}  // namespace

ZeroShotResult zero_shot_eval(const std::vector<data::SiteDataset>& sites,
                              const model::TreatmentCatalog& catalog, std::size_t held_out,
                              const Trainer& train) {
  if (held_out >= catalog.treatments()) {
    throw ConfigurationError("held-out treatment " + std::to_string(held_out) +
                             " is outside the catalog");
  }
  if (!catalog.uses_descriptions()) {
    throw ConfigurationError("zero-shot evaluation needs treatment description vectors");
  }
  for (std::size_t j = 0; j < catalog.treatments(); ++j) {
    if (!catalog.descriptions()->contains(j)) {
      throw ConfigurationError("no description vector for treatment " + std::to_string(j));
    }
  }

  ZeroShotResult result;
  result.held_out = held_out;
  const auto supervised = held_out_rmse(train(sites), held_out);

  auto reduced = sites;
  const auto drop = [&](std::vector<DataRecord>& records) {
    std::erase_if(records, [&](const DataRecord& r) { return r.treatment == held_out; });
  };
  for (auto& site : reduced) {
    drop(site.train);
    drop(site.val);
  }
  const auto zero_shot = held_out_rmse(train(reduced), held_out);

  result.supervised_rmse = supervised.rmse;
  result.zero_shot_rmse = zero_shot.rmse;
  result.delta = zero_shot.rmse - supervised.rmse;
  result.supervised_ids = supervised.ids;
  result.zero_shot_ids = zero_shot.ids;
  return result;
}

}  // namespace fedtrans::evaluation
