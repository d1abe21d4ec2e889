#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/model/network.hpp"
#include "fedtrans/model/parameters.hpp"
#include "fedtrans/numerics/adam.hpp"

namespace fedtrans::training {

using model::PredictorHead;
using model::SharedParameters;
using numerics::AdamState;

/// How the two argmin problems interleave inside local training.
enum class Alternation {
  /// Predictor step then shared step on every mini-batch.
  batch,
  /// A full predictor pass over the epoch's batches, then a full shared pass.
  epoch,
};

const char* to_string(Alternation a);
Alternation parse_alternation(const std::string& text);

struct LocalTrainConfig {
  std::size_t local_epochs = 5;
  std::size_t batch_size = 128;
  double learning_rate = 5e-3;
  std::uint64_t seed = 0;
  Alternation alternation = Alternation::batch;

  void validate() const;
};

/// A site with its data and the encoder that turns its records into model inputs.
struct Site {
  data::SiteDataset data;
  model::InputPipeline pipeline;
};

struct LossTraceEntry {
  std::size_t round = 0;
  std::size_t site = 0;
  std::size_t epoch = 0;
  std::string phase;  // predictor | shared | eval
  std::string split;  // train | val
  double loss = 0.0;
};

/// Header and rows of the loss-trace file: `round,site,epoch,phase,split,loss`.
std::string loss_trace_header();
std::string format_loss_trace(const LossTraceEntry& entry);

struct PredictorStep {
  PredictorHead head;
  AdamState optimizer;
  double loss = 0.0;
};

/// One Adam step on the head against batch MSE; the shared set enters the tape as constants.
PredictorStep train_predictor_phase(const SharedParameters& shared, const PredictorHead& head,
                                    const AdamState& optimizer, const model::ModelBatch& batch,
                                    const model::ModelConfig& config);

struct SharedStep {
  SharedParameters shared;
  AdamState optimizer;
  double loss = 0.0;
};

/// One Adam step on embedder, covariate encoder, treatment encoder and cross-attention
/// jointly; the head enters the tape as constants.
SharedStep train_shared_phase(const SharedParameters& shared, const PredictorHead& head,
                              const AdamState& optimizer, const model::ModelBatch& batch,
                              const model::ModelConfig& config);

/// The two per-phase Adam states a site keeps between rounds.
struct SiteOptimizers {
  AdamState head;
  AdamState shared;
};

SiteOptimizers make_site_optimizers(const SharedParameters& shared, const PredictorHead& head,
                                    const LocalTrainConfig& config);

struct LocalTrainResult {
  SharedParameters shared;
  PredictorHead head;
  SiteOptimizers optimizers;
  std::vector<LossTraceEntry> trace;
};

/// Runs `local_epochs` epochs of alternating minimization starting from the broadcast
/// globals. Optimizer moments continue from `optimizers` when given and start at zero
/// otherwise; the result depends only on the arguments.
/// `round` is used for the shuffle seed and trace annotation.
/// Throws DivergenceError naming round, site, epoch and batch on a non-finite loss.
LocalTrainResult local_train(const Site& site, const SharedParameters& global,
                             const PredictorHead& head, const LocalTrainConfig& config,
                             std::size_t round = 0,
                             const std::optional<SiteOptimizers>& optimizers = std::nullopt);

/// Factual-outcome MSE of a record set under the given parameters.
double factual_mse(std::span<const data::DataRecord> records, const SharedParameters& shared,
                   const PredictorHead& head, const model::InputPipeline& pipeline);

}  // namespace fedtrans::training
