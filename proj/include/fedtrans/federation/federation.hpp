#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedtrans/model/network.hpp"
#include "fedtrans/training/local.hpp"

namespace fedtrans::federation {

using model::PredictorHead;
using model::SharedParameters;
using training::Site;

/// n_i-weighted parameter-wise mean. Sums run in the given order, so callers wanting
/// permutation-invariant bits pass sites in canonical (site id) order.
/// Throws AggregationError naming the first divergent path, and on non-positive counts.
SharedParameters aggregate_weighted(std::span<const SharedParameters> params,
                                    std::span<const double> counts);

struct FederationConfig {
  std::size_t rounds = 200;
  std::size_t patience = 20;
  training::LocalTrainConfig local;

  void validate() const;
};

struct FederationState {
  SharedParameters global;
  /// Keyed by site id; personalized and never aggregated.
  std::map<std::size_t, PredictorHead> heads;
  /// Per-site Adam moments, carried from round to round; they never leave the site.
  std::map<std::size_t, training::SiteOptimizers> optimizers;
  std::size_t round = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t rounds_since_improvement = 0;
};

/// Client/server message channel. The in-process form moves serialized bytes so the
/// parameters cross the same boundary a network backend would.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void broadcast(const SharedParameters& global) = 0;
  virtual SharedParameters receive_global(std::size_t site) = 0;
  virtual void upload(std::size_t site, const SharedParameters& local, double count) = 0;
  struct Upload {
    std::size_t site;
    SharedParameters params;
    double count;
  };
  /// Uploads of the current round in ascending site order; clears the round.
  virtual std::vector<Upload> collect() = 0;
};

class InProcessTransport final : public Transport {
 public:
  void broadcast(const SharedParameters& global) override;
  SharedParameters receive_global(std::size_t site) override;
  void upload(std::size_t site, const SharedParameters& local, double count) override;
  std::vector<Upload> collect() override;

 private:
  std::string global_;
  std::map<std::size_t, std::pair<std::string, double>> uploads_;
};

struct SiteRoundMetrics {
  std::size_t site = 0;
  double train_rmse = 0.0;
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double weight = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<SiteRoundMetrics> sites;
  double aggregate_val = 0.0;
  bool improved = false;
  std::size_t early_stop_counter = 0;
};

/// Header and rows of the round-history file.
std::string round_history_header(std::span<const std::size_t> site_ids);
std::string format_round(const RoundRecord& record);

struct RoundOutcome {
  FederationState state;
  RoundRecord record;
  std::vector<training::LossTraceEntry> trace;
};

/// Broadcast, local training at every site, upload, aggregation, then per-site RMSE-F of
/// the new globals with each site's own head. The aggregate validation score is the
/// n_i-weighted mean of site validation RMSE-F (training RMSE-F when no site has a
/// validation split). Early-stopping fields of the state are left for the caller.
RoundOutcome run_round(const FederationState& state, std::span<const Site> sites,
                       const FederationConfig& config, Transport* transport = nullptr);

/// Receives (round, computed aggregate validation score) and returns the score to monitor.
using ValidationMonitor = std::function<double(std::size_t, double)>;

struct FederationResult {
  /// State after the best-scoring round (the initial state when no round improves).
  FederationState best;
  std::size_t best_round = 0;
  /// State after the final executed round.
  FederationState last;
  std::vector<RoundRecord> history;
  std::vector<training::LossTraceEntry> trace;
  bool early_stopped = false;
};

/// Up to `rounds` rounds. A round improves when its score is strictly below the best so far;
/// training halts once `patience` consecutive rounds fail to improve.
FederationResult run_federation(const FederationConfig& config, std::span<const Site> sites,
                                const FederationState& initial,
                                const ValidationMonitor& monitor = {});

/// Globals from the run seed and one head per site, each from its own sub-stream.
FederationState initialize_federation(const model::ModelConfig& config, std::size_t vocab_size,
                                      std::span<const Site> sites, std::uint64_t seed);

/// Shared vocabulary over the union of every site's training tokens and a per-site
/// standardizer fitted on that site's training split.
std::vector<Site> prepare_sites(std::vector<data::SiteDataset> sites,
                                const model::ModelConfig& config,
                                const model::TreatmentCatalog& catalog);

/// Pools every site's train/val/test splits into one site (id 0), keeping the test
/// records of each site in the pooled test split.
data::SiteDataset pool_sites(std::span<const data::SiteDataset> sites);

struct TrainedModel {
  std::vector<Site> sites;
  FederationResult result;
};

/// prepare_sites + initialize_federation + run_federation.
TrainedModel train_federated(std::vector<data::SiteDataset> sites,
                             const model::ModelConfig& config,
                             const model::TreatmentCatalog& catalog,
                             const FederationConfig& federation,
                             const ValidationMonitor& monitor = {});

/// The single-site degenerate case on pooled data.
TrainedModel run_centralized(std::span<const data::SiteDataset> sites,
                             const model::ModelConfig& config,
                             const model::TreatmentCatalog& catalog,
                             const FederationConfig& federation);

}  // namespace fedtrans::federation
