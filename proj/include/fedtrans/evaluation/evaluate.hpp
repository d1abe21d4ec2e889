#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fedtrans/evaluation/metrics.hpp"
#include "fedtrans/federation/federation.hpp"

namespace fedtrans::evaluation {

enum class Split { train, val, test };

const std::vector<DataRecord>& split_records(const data::SiteDataset& site, Split split);

/// Metrics of the best checkpoint on every site's split. Counterfactual arms come from the
/// global shared encoders and that site's own predictor head.
MetricsReport evaluate_model(const federation::TrainedModel& model, Split split = Split::test);

/// Independently trained models, each over its own sites, reported as one set of sites.
MetricsReport evaluate_models(std::span<const federation::TrainedModel> models,
                              Split split = Split::test);

/// Trains a model on the given sites; lets zero-shot runs reuse any training protocol.
using Trainer = std::function<federation::TrainedModel(const std::vector<data::SiteDataset>&)>;

struct ZeroShotResult {
  std::size_t held_out = 0;
  double supervised_rmse = 0.0;
  double zero_shot_rmse = 0.0;
  double delta = 0.0;  // zero-shot minus supervised
  std::vector<std::size_t> supervised_ids;
  std::vector<std::size_t> zero_shot_ids;
};

/// Run A trains on every arm; run B drops the held-out arm from all train and val splits.
/// Both report factual RMSE on the held-out arm's test records across all sites, with run B
/// reaching the unseen arm through its description vector.
ZeroShotResult zero_shot_eval(const std::vector<data::SiteDataset>& sites,
                              const model::TreatmentCatalog& catalog, std::size_t held_out,
                              const Trainer& train);

}  // namespace fedtrans::evaluation
