#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fedtrans/data/split.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/federation/federation.hpp"
#include "fedtrans/numerics/ops.hpp"
#include "fedtrans/training/local.hpp"
#include "support/finite_difference.hpp"
#include "support/model_fixture.hpp"

using namespace fedtrans;
using namespace fedtrans::training;
using model::ModelBatch;

namespace {

Site fixture_site(const oracle::ModelFixture& f) {
  Site site;
  site.pipeline = f.pipeline;
  site.data.schema = f.pipeline.schema;
  const auto split = data::split_dataset(f.dataset.records, 3);
  site.data.train = split.train;
  site.data.val = split.val;
  site.data.test = split.test;
  return site;
}

}  // namespace

TEST(PredictorPhase, ZeroLearningRateKeepsHeadAndReportsLoss) {
  const auto f = oracle::make_fixture(oracle::small_config(), 16, 1);
  const ModelBatch batch = f.pipeline.factual_batch(f.dataset.records);
  const auto opt = numerics::make_adam_state(f.head.values, {0.0});
  const auto step = train_predictor_phase(f.shared, f.head, opt, batch, f.pipeline.config);
  EXPECT_EQ(step.head, f.head);
  EXPECT_GT(step.loss, 0.0);
  EXPECT_TRUE(std::isfinite(step.loss));
}

TEST(PredictorPhase, GradientsMatchFiniteDifferencesWithSharedFrozen) {
  const auto f = oracle::make_fixture(oracle::small_config(8, 2), 6, 2, 2, 1, 0.3);
  const ModelBatch batch = f.pipeline.factual_batch(f.dataset.records);
  auto loss_of = [&](numerics::Tape& tape, const numerics::ParameterSet& head) {
    model::BoundParameters sp(tape, f.shared.values, false), hp(tape, head, true);
    auto pass = model::forward_batch(batch, sp, hp, f.pipeline.config);
    return numerics::mse_loss(pass.prediction, tape.constant(batch.targets));
  };
  numerics::Tape tape;
  const auto grads = tape.backward(loss_of(tape, f.head.values));
  // Only head tensors are tracked.
  EXPECT_EQ(grads.size(), f.head.values.size());
  auto value = [&](const numerics::ParameterSet& p) {
    numerics::Tape t;
    return loss_of(t, p).value().item();
  };
  double worst = 0.0;
  for (const auto& [path, t] : f.head.values) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double numeric = oracle::central_difference(value, f.head.values, path, i);
      worst = std::max(worst, oracle::relative_error(grads.at(path)[i], numeric));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(PredictorPhase, SharedParametersUntouched) {
  const auto f = oracle::make_fixture(oracle::small_config(), 16, 3);
  const auto before = f.shared;
  const ModelBatch batch = f.pipeline.factual_batch(f.dataset.records);
  const auto step = train_predictor_phase(f.shared, f.head,
                                          numerics::make_adam_state(f.head.values), batch,
                                          f.pipeline.config);
  EXPECT_EQ(f.shared, before);
  EXPECT_NE(step.head, f.head);
}

TEST(SharedPhase, ZeroLearningRateKeepsShared) {
  const auto f = oracle::make_fixture(oracle::small_config(), 16, 4);
  const ModelBatch batch = f.pipeline.factual_batch(f.dataset.records);
  const auto step = train_shared_phase(f.shared, f.head,
                                       numerics::make_adam_state(f.shared.values, {0.0}), batch,
                                       f.pipeline.config);
  EXPECT_EQ(step.shared, f.shared);
}

TEST(SharedPhase, HeadUntouchedAndSharedMoves) {
  const auto f = oracle::make_fixture(oracle::small_config(), 16, 5);
  const auto head_before = f.head;
  const ModelBatch batch = f.pipeline.factual_batch(f.dataset.records);
  const auto step = train_shared_phase(f.shared, f.head,
                                       numerics::make_adam_state(f.shared.values), batch,
                                       f.pipeline.config);
  EXPECT_EQ(f.head, head_before);
  EXPECT_NE(step.shared, f.shared);
  // The [PAD] row never receives gradient, so it stays zero.
  const auto& table = step.shared.at("covariate.embedding");
  for (std::size_t c = 0; c < table.dim(1); ++c) EXPECT_EQ(table.at(0, c), 0.0);
}

TEST(SharedPhase, AlternatingCyclesReduceToyLoss) {
  // One numerical feature, every record under the same treatment, outcome linear in x.
  tabular::DatasetSchema schema;
  schema.features = {{"dose", tabular::FeatureKind::numerical}};
  std::vector<data::DataRecord> records;
  numerics::Rng rng(6);
  for (std::size_t i = 0; i < 32; ++i) {
    data::DataRecord r;
    r.id = i;
    const double x = rng.normal();
    r.covariates.emplace("dose", x);
    r.outcome = 2.0 * x - 1.0;
    records.push_back(r);
  }
  model::InputPipeline p;
  p.schema = schema;
  p.vocabulary = tabular::build_vocabulary(schema, records);
  p.standardizer = tabular::Standardizer::fit(schema, records);
  p.config = oracle::small_config(8, 2);
  p.catalog = model::TreatmentCatalog(2);
  auto shared = model::init_shared(p.config, p.vocabulary.size(), rng);
  auto head = model::init_head(p.config, rng);
  const ModelBatch batch = p.factual_batch(records);
  auto opts = make_site_optimizers(shared, head, {});
  const double initial = factual_mse(records, shared, head, p);
  for (int cycle = 0; cycle < 2; ++cycle) {
    auto ps = train_predictor_phase(shared, head, opts.head, batch, p.config);
    head = ps.head;
    opts.head = ps.optimizer;
    auto ss = train_shared_phase(shared, head, opts.shared, batch, p.config);
    shared = ss.shared;
    opts.shared = ss.optimizer;
  }
  EXPECT_LT(factual_mse(records, shared, head, p), initial);
}

TEST(Phases, EmptyBatchThrows) {
  const auto f = oracle::make_fixture(oracle::small_config(), 4, 7);
  EXPECT_THROW(f.pipeline.factual_batch({}), EmptyInputError);
  ModelBatch empty;
  EXPECT_THROW(train_predictor_phase(f.shared, f.head, numerics::make_adam_state(f.head.values),
                                     empty, f.pipeline.config),
               EmptyInputError);
  EXPECT_THROW(train_shared_phase(f.shared, f.head, numerics::make_adam_state(f.shared.values),
                                  empty, f.pipeline.config),
               EmptyInputError);
}

TEST(LocalTrain, ZeroEpochsReturnInputs) {
  const auto f = oracle::make_fixture(oracle::small_config(), 30, 8);
  LocalTrainConfig cfg;
  cfg.local_epochs = 0;
  const auto r = local_train(fixture_site(f), f.shared, f.head, cfg);
  EXPECT_EQ(r.shared, f.shared);
  EXPECT_EQ(r.head, f.head);
  EXPECT_TRUE(r.trace.empty());
}

TEST(LocalTrain, DeterministicUnderSeed) {
  const auto f = oracle::make_fixture(oracle::small_config(), 40, 9);
  LocalTrainConfig cfg;
  cfg.local_epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 17;
  const Site site = fixture_site(f);
  const auto a = local_train(site, f.shared, f.head, cfg, 3);
  const auto b = local_train(site, f.shared, f.head, cfg, 3);
  EXPECT_EQ(a.shared, b.shared);
  EXPECT_EQ(a.head, b.head);
  cfg.seed = 18;
  EXPECT_NE(local_train(site, f.shared, f.head, cfg, 3).shared, a.shared);
}

TEST(LocalTrain, TraceHasOneLinePerEpochPhaseAndSplit) {
  const auto f = oracle::make_fixture(oracle::small_config(), 40, 10);
  LocalTrainConfig cfg;
  cfg.local_epochs = 3;
  cfg.batch_size = 7;
  const auto r = local_train(fixture_site(f), f.shared, f.head, cfg, 4);
  ASSERT_EQ(r.trace.size(), 9u);
  for (const auto& e : r.trace) {
    EXPECT_EQ(e.round, 4u);
    EXPECT_TRUE(std::isfinite(e.loss));
  }
  EXPECT_EQ(loss_trace_header(), "round,site,epoch,phase,split,loss");
  EXPECT_EQ(format_loss_trace({1, 2, 3, "shared", "train", 0.5}), "1,2,3,shared,train,0.5");
}

TEST(LocalTrain, EpochAlternationAlsoTrains) {
  const auto f = oracle::make_fixture(oracle::small_config(), 40, 11);
  LocalTrainConfig cfg;
  cfg.local_epochs = 3;
  cfg.batch_size = 8;
  cfg.alternation = Alternation::epoch;
  const Site site = fixture_site(f);
  const auto r = local_train(site, f.shared, f.head, cfg);
  EXPECT_LT(factual_mse(site.data.train, r.shared, r.head, site.pipeline),
            factual_mse(site.data.train, f.shared, f.head, site.pipeline));
  EXPECT_EQ(parse_alternation("epoch"), Alternation::epoch);
  EXPECT_THROW(parse_alternation("round"), ConfigurationError);
}

TEST(LocalTrain, NonFiniteLossNamesEpochAndBatch) {
  const auto f = oracle::make_fixture(oracle::small_config(), 30, 12);
  Site site = fixture_site(f);
  site.data.train[0].outcome = std::numeric_limits<double>::quiet_NaN();
  LocalTrainConfig cfg;
  cfg.local_epochs = 1;
  try {
    local_train(site, f.shared, f.head, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(LocalTrain, EmptyTrainingSplitThrows) {
  const auto f = oracle::make_fixture(oracle::small_config(), 30, 13);
  Site site = fixture_site(f);
  site.data.train.clear();
  EXPECT_THROW(local_train(site, f.shared, f.head, {}), EmptyInputError);
}

TEST(LocalTrain, OverfitsSmallSyntheticSite) {
  data::SyntheticDGPConfig dgp;
  dgp.records = 64;
  dgp.numerical_features = 6;
  dgp.noise = 0.1;
  dgp.seed = 1;
  const auto ds = data::generate_synthetic(dgp);
  const auto split = data::split_dataset(ds.records, 1);
  model::ModelConfig mc = oracle::small_config(32, 2);
  federation::FederationConfig fc;
  fc.rounds = 40;  // 200 epochs
  fc.patience = 1000;
  fc.local.seed = 1;
  const std::vector<data::SiteDataset> sites{{0, ds.schema, split.train, split.val, split.test}};
  const auto trained = federation::run_centralized(sites, mc, model::TreatmentCatalog(2), fc);
  double best_train = std::numeric_limits<double>::infinity();
  for (const auto& r : trained.result.history) best_train = std::min(best_train, r.sites[0].train_rmse);
  EXPECT_LT(best_train, dgp.noise + 0.1);
}
