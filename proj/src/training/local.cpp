#include "fedtrans/training/local.hpp"

#include <cmath>
#include <numeric>

#include "fedtrans/errors.hpp"
#include "fedtrans/numerics/ops.hpp"
#include "fedtrans/numerics/rng.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::training {

using model::BoundParameters;
using model::ModelBatch;
using numerics::Tape;

const char* to_string(Alternation a) { return a == Alternation::batch ? "batch" : "epoch"; }

Alternation parse_alternation(const std::string& text) {
  if (text == "batch") return Alternation::batch;
  if (text == "epoch") return Alternation::epoch;
  throw ConfigurationError("alternation must be 'batch' or 'epoch', got '" + text + "'");
}

void LocalTrainConfig::validate() const {
  if (batch_size == 0) throw ConfigurationError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigurationError("learning_rate must be finite and non-negative");
  }
}

std::string loss_trace_header() { return "round,site,epoch,phase,split,loss"; }

std::string format_loss_trace(const LossTraceEntry& e) {
  return std::to_string(e.round) + "," + std::to_string(e.site) + "," + std::to_string(e.epoch) +
         "," + e.phase + "," + e.split + "," + text::format_double(e.loss);
}

namespace {

void require_nonempty(const ModelBatch& batch) {
  if (batch.batch == 0) throw EmptyInputError("training step on an empty batch");
  if (batch.targets.size() != batch.batch * batch.queries) {
    throw ContractError("training batch has no factual targets");
  }
}

}  // namespace

PredictorStep train_predictor_phase(const SharedParameters& shared, const PredictorHead& head,
                                    const AdamState& optimizer, const ModelBatch& batch,
                                    const model::ModelConfig& config) {
  require_nonempty(batch);
  Tape tape;
  BoundParameters sp(tape, shared.values, false), hp(tape, head.values, true);
  auto pass = model::forward_batch(batch, sp, hp, config);
  numerics::Var loss = numerics::mse_loss(pass.prediction, tape.constant(batch.targets));
  PredictorStep step;
  step.loss = loss.value().item();
  if (!std::isfinite(step.loss)) {
    step.head = head;
    step.optimizer = optimizer;
    return step;
  }
  auto update = numerics::adam_step(head.values, tape.backward(loss), optimizer);
  step.head.values = std::move(update.params);
  step.optimizer = std::move(update.state);
  return step;
}

SharedStep train_shared_phase(const SharedParameters& shared, const PredictorHead& head,
                              const AdamState& optimizer, const ModelBatch& batch,
                              const model::ModelConfig& config) {
  require_nonempty(batch);
  Tape tape;
  BoundParameters sp(tape, shared.values, true), hp(tape, head.values, false);
  auto pass = model::forward_batch(batch, sp, hp, config);
  numerics::Var loss = numerics::mse_loss(pass.prediction, tape.constant(batch.targets));
  SharedStep step;
  step.loss = loss.value().item();
  if (!std::isfinite(step.loss)) {
    step.shared = shared;
    step.optimizer = optimizer;
    return step;
  }
  auto update = numerics::adam_step(shared.values, tape.backward(loss), optimizer);
  step.shared.values = std::move(update.params);
  step.optimizer = std::move(update.state);
  return step;
}

double factual_mse(std::span<const data::DataRecord> records, const SharedParameters& shared,
                   const PredictorHead& head, const model::InputPipeline& pipeline) {
  if (records.empty()) throw EmptyInputError("factual_mse over zero records");
  const auto pred = model::predict_factual(records, shared, head, pipeline);
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double r = records[i].outcome - pred[i];
    acc += r * r;
  }
  return acc / static_cast<double>(records.size());
}

SiteOptimizers make_site_optimizers(const SharedParameters& shared, const PredictorHead& head,
                                    const LocalTrainConfig& config) {
  const numerics::AdamHyperparameters hyper{config.learning_rate};
  return {numerics::make_adam_state(head.values, hyper),
          numerics::make_adam_state(shared.values, hyper)};
}

LocalTrainResult local_train(const Site& site, const SharedParameters& global,
                             const PredictorHead& head, const LocalTrainConfig& config,
                             std::size_t round, const std::optional<SiteOptimizers>& optimizers) {
  config.validate();
  const auto& train = site.data.train;
  if (train.empty()) {
    throw EmptyInputError("site " + std::to_string(site.data.site_id) + " has no training records");
  }
  const auto& mc = site.pipeline.config;
  LocalTrainResult out{global, head, {}, {}};
  SiteOptimizers opt = optimizers ? *optimizers : make_site_optimizers(global, head, config);
  opt.head.hyper.learning_rate = config.learning_rate;
  opt.shared.hyper.learning_rate = config.learning_rate;
  AdamState& head_opt = opt.head;
  AdamState& shared_opt = opt.shared;
  const std::size_t site_id = site.data.site_id;

  auto check = [&](double loss, std::size_t epoch, std::size_t batch, const char* phase) {
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite " + std::string(phase) + " loss in round " +
                            std::to_string(round) + ", site " + std::to_string(site_id) +
                            ", epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
    }
  };

  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    numerics::Rng rng(numerics::derive_seed(config.seed, {0x7A11, round, epoch}));
    rng.shuffle(order);

    std::vector<ModelBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<data::DataRecord> rows;
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
        rows.push_back(train[order[k]]);
      }
      batches.push_back(site.pipeline.factual_batch(rows));
    }

    double predictor_sum = 0.0, shared_sum = 0.0;
    auto predictor_step = [&](std::size_t b) {
      auto step = train_predictor_phase(out.shared, out.head, head_opt, batches[b], mc);
      check(step.loss, epoch, b, "predictor");
      out.head = std::move(step.head);
      head_opt = std::move(step.optimizer);
      predictor_sum += step.loss * static_cast<double>(batches[b].batch);
    };
    auto shared_step = [&](std::size_t b) {
      auto step = train_shared_phase(out.shared, out.head, shared_opt, batches[b], mc);
      check(step.loss, epoch, b, "shared");
      out.shared = std::move(step.shared);
      shared_opt = std::move(step.optimizer);
      shared_sum += step.loss * static_cast<double>(batches[b].batch);
    };
    if (config.alternation == Alternation::batch) {
      for (std::size_t b = 0; b < batches.size(); ++b) {
        predictor_step(b);
        shared_step(b);
      }
    } else {
      for (std::size_t b = 0; b < batches.size(); ++b) predictor_step(b);
      for (std::size_t b = 0; b < batches.size(); ++b) shared_step(b);
    }

    const double n = static_cast<double>(train.size());
    out.trace.push_back({round, site_id, epoch, "predictor", "train", predictor_sum / n});
    out.trace.push_back({round, site_id, epoch, "shared", "train", shared_sum / n});
    if (!site.data.val.empty()) {
      const double val = factual_mse(site.data.val, out.shared, out.head, site.pipeline);
      out.trace.push_back({round, site_id, epoch, "eval", "val", val});
    }
  }
  out.optimizers = std::move(opt);
  return out;
}

}  // namespace fedtrans::training
