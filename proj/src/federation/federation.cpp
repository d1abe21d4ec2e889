#include "fedtrans/federation/federation.hpp"

#include <algorithm>
#include <cmath>

#include "fedtrans/errors.hpp"
#include "fedtrans/model/checkpoint.hpp"
#include "fedtrans/tabular/vocabulary.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::federation {

using numerics::Tensor;

SharedParameters aggregate_weighted(std::span<const SharedParameters> params,
                                    std::span<const double> counts) {
  if (params.empty()) throw AggregationError("nothing to aggregate");
  if (params.size() != counts.size()) {
    throw AggregationError("got " + std::to_string(params.size()) + " parameter sets but " +
                           std::to_string(counts.size()) + " counts");
  }
  double total = 0.0;
  for (double c : counts) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw AggregationError("site counts must be positive and finite");
    }
    total += c;
  }
  const auto& reference = params.front().values;
  for (std::size_t s = 1; s < params.size(); ++s) {
    const auto& other = params[s].values;
    for (const auto& [path, tensor] : reference) {
      auto it = other.find(path);
      if (it == other.end()) {
        throw AggregationError("site " + std::to_string(s) + " lacks parameter " + path);
      }
      if (it->second.shape() != tensor.shape()) {
        throw AggregationError("parameter " + path + " has shape " +
                               numerics::shape_to_string(it->second.shape()) + " at site " +
                               std::to_string(s) + " but " +
                               numerics::shape_to_string(tensor.shape()) + " at site 0");
      }
    }
    for (const auto& [path, tensor] : other) {
      if (!reference.contains(path)) {
        throw AggregationError("site " + std::to_string(s) + " has extra parameter " + path);
      }
    }
  }
  if (params.size() == 1) return params.front();

  std::vector<double> weights;
  for (double c : counts) weights.push_back(c / total);
  SharedParameters out;
  for (const auto& [path, tensor] : reference) {
    Tensor acc(tensor.shape());
    std::vector<const double*> src;
    for (const auto& p : params) src.push_back(p.values.at(path).raw());
    for (std::size_t i = 0; i < acc.size(); ++i) {
      double v = 0.0;
      bool consensus = true;
      for (std::size_t s = 0; s < src.size(); ++s) {
        v += weights[s] * src[s][i];
        consensus = consensus && src[s][i] == src[0][i];
      }
      // Identical inputs aggregate to themselves exactly, not to a rounded weighted sum.
      acc[i] = consensus ? src[0][i] : v;
    }
    out.values.emplace(path, std::move(acc));
  }
  return out;
}

void FederationConfig::validate() const {
  if (rounds == 0) throw ConfigurationError("federation rounds must be at least 1");
  if (patience == 0) throw ConfigurationError("patience must be at least 1");
  local.validate();
}

void InProcessTransport::broadcast(const SharedParameters& global) {
  global_ = model::serialize_shared(global);
}

SharedParameters InProcessTransport::receive_global(std::size_t) {
  if (global_.empty()) throw ContractError("no global parameters were broadcast");
  return model::deserialize_shared(global_);
}

void InProcessTransport::upload(std::size_t site, const SharedParameters& local, double count) {
  uploads_[site] = {model::serialize_shared(local), count};
}

std::vector<Transport::Upload> InProcessTransport::collect() {
  std::vector<Upload> out;
  for (auto& [site, entry] : uploads_) {
    out.push_back({site, model::deserialize_shared(entry.first), entry.second});
  }
  uploads_.clear();
  return out;
}

std::string round_history_header(std::span<const std::size_t> site_ids) {
  std::string h = "round";
  for (std::size_t s : site_ids) {
    h += ",site" + std::to_string(s) + "_train_rmse,site" + std::to_string(s) + "_val_rmse";
  }
  return h + ",aggregate_val_rmse,early_stop_counter";
}

std::string format_round(const RoundRecord& r) {
  std::string line = std::to_string(r.round);
  for (const auto& s : r.sites) {
    line += "," + text::format_double(s.train_rmse) + ",";
    if (!std::isnan(s.val_rmse)) line += text::format_double(s.val_rmse);
  }
  return line + "," + text::format_double(r.aggregate_val) + "," +
         std::to_string(r.early_stop_counter);
}

RoundOutcome run_round(const FederationState& state, std::span<const Site> sites,
                       const FederationConfig& config, Transport* transport) {
  if (sites.empty()) throw EmptyInputError("a round needs at least one site");
  InProcessTransport local_transport;
  Transport& channel = transport ? *transport : local_transport;
  const std::size_t round = state.round + 1;

  RoundOutcome out{state, {}, {}};
  out.state.round = round;
  channel.broadcast(state.global);
  for (const auto& site : sites) {
    const std::size_t id = site.data.site_id;
    auto head_it = state.heads.find(id);
    if (head_it == state.heads.end()) {
      throw ContractError("no predictor head for site " + std::to_string(id));
    }
    std::optional<training::SiteOptimizers> optimizers;
    if (auto it = state.optimizers.find(id); it != state.optimizers.end()) {
      optimizers = it->second;
    }
    try {
      auto result = training::local_train(site, channel.receive_global(id), head_it->second,
                                          config.local, round, optimizers);
      channel.upload(id, result.shared, static_cast<double>(site.data.train.size()));
      out.state.heads[id] = std::move(result.head);
      out.state.optimizers[id] = std::move(result.optimizers);
      out.trace.insert(out.trace.end(), result.trace.begin(), result.trace.end());
    } catch (const DivergenceError& e) {
      throw DivergenceError("round " + std::to_string(round) + " aborted: " + e.what());
    }
  }
  std::vector<SharedParameters> uploaded;
  std::vector<double> counts;
  for (auto& up : channel.collect()) {
    uploaded.push_back(std::move(up.params));
    counts.push_back(up.count);
  }
  out.state.global = aggregate_weighted(uploaded, counts);

  out.record.round = round;
  double val_sum = 0.0, val_weight = 0.0, train_sum = 0.0, train_weight = 0.0;
  for (const auto& site : sites) {
    SiteRoundMetrics m;
    m.site = site.data.site_id;
    m.weight = static_cast<double>(site.data.train.size());
    const auto& head = out.state.heads.at(m.site);
    m.train_rmse =
        std::sqrt(training::factual_mse(site.data.train, out.state.global, head, site.pipeline));
    train_sum += m.weight * m.train_rmse;
    train_weight += m.weight;
    if (!site.data.val.empty()) {
      m.val_rmse =
          std::sqrt(training::factual_mse(site.data.val, out.state.global, head, site.pipeline));
      val_sum += m.weight * m.val_rmse;
      val_weight += m.weight;
    }
    out.record.sites.push_back(m);
  }
  out.record.aggregate_val = val_weight > 0.0 ? val_sum / val_weight : train_sum / train_weight;
  return out;
}

FederationResult run_federation(const FederationConfig& config, std::span<const Site> sites,
                                const FederationState& initial,
                                const ValidationMonitor& monitor) {
  config.validate();
  if (sites.empty()) throw EmptyInputError("federation needs at least one site");
  bool any_train = false;
  for (const auto& s : sites) any_train = any_train || !s.data.train.empty();
  if (!any_train) throw EmptyInputError("no site has training data");

  FederationResult result;
  result.best = initial;
  FederationState state = initial;
  InProcessTransport transport;
  for (std::size_t r = 0; r < config.rounds; ++r) {
    RoundOutcome outcome = run_round(state, sites, config, &transport);
    state = std::move(outcome.state);
    const double score =
        monitor ? monitor(state.round, outcome.record.aggregate_val) : outcome.record.aggregate_val;
    outcome.record.aggregate_val = score;
    if (score < state.best_val) {
      state.best_val = score;
      state.rounds_since_improvement = 0;
      outcome.record.improved = true;
    } else {
      ++state.rounds_since_improvement;
    }
    outcome.record.early_stop_counter = state.rounds_since_improvement;
    if (outcome.record.improved) {
      result.best = state;
      result.best_round = state.round;
    }
    result.history.push_back(std::move(outcome.record));
    result.trace.insert(result.trace.end(), outcome.trace.begin(), outcome.trace.end());
    if (state.rounds_since_improvement >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.last = std::move(state);
  return result;
}

FederationState initialize_federation(const model::ModelConfig& config, std::size_t vocab_size,
                                      std::span<const Site> sites, std::uint64_t seed) {
  numerics::Rng rng(numerics::derive_seed(seed, {0x1417}));
  FederationState state;
  numerics::Rng shared_rng = rng.split({0});
  state.global = model::init_shared(config, vocab_size, shared_rng);
  // Every head starts from the same draw, as if the server shipped one initial model.
  numerics::Rng head_rng = rng.split({1});
  const PredictorHead head = model::init_head(config, head_rng);
  for (const auto& site : sites) {
    if (!state.heads.emplace(site.data.site_id, head).second) {
      throw ContractError("duplicate site id " + std::to_string(site.data.site_id));
    }
  }
  return state;
}

std::vector<Site> prepare_sites(std::vector<data::SiteDataset> sites,
                                const model::ModelConfig& config,
                                const model::TreatmentCatalog& catalog) {
  config.validate();
  if (sites.empty()) throw EmptyInputError("no sites to prepare");
  if (catalog.treatments() != config.treatments) {
    throw ConfigurationError("treatment catalog covers " + std::to_string(catalog.treatments()) +
                             " treatments but the model expects " +
                             std::to_string(config.treatments));
  }
  if (catalog.uses_descriptions() != config.description_dim.has_value()) {
    throw ConfigurationError(
        "description vectors must be configured in both the model and the catalog");
  }
  if (catalog.uses_descriptions()) {
    for (std::size_t j = 0; j < config.treatments; ++j) {
      const auto input = catalog.input(j);
      model::treatment_input_row(input, config);
    }
  }
  tabular::Vocabulary vocab;
  bool any = false;
  for (const auto& s : sites) {
    s.schema.validate();
    for (const auto* split : {&s.train, &s.val, &s.test}) {
      for (const auto& r : *split) {
        if (r.treatment >= config.treatments) {
          throw ConfigurationError("site " + std::to_string(s.site_id) + " record " +
                                   std::to_string(r.id) + " has treatment " +
                                   std::to_string(r.treatment) + " outside [0, " +
                                   std::to_string(config.treatments) + ")");
        }
      }
    }
    any = any || !s.train.empty();
    tabular::extend_vocabulary(vocab, s.schema, s.train);
  }
  if (!any) throw EmptyInputError("no site has training records");

  std::vector<Site> out;
  for (auto& s : sites) {
    Site site;
    site.pipeline.schema = s.schema;
    site.pipeline.vocabulary = vocab;
    site.pipeline.standardizer = tabular::Standardizer::fit(s.schema, s.train);
    site.pipeline.catalog = catalog;
    site.pipeline.config = config;
    site.data = std::move(s);
    out.push_back(std::move(site));
  }
  std::sort(out.begin(), out.end(),
            [](const Site& a, const Site& b) { return a.data.site_id < b.data.site_id; });
  return out;
}

data::SiteDataset pool_sites(std::span<const data::SiteDataset> sites) {
  if (sites.empty()) throw EmptyInputError("cannot pool zero sites");
  data::SiteDataset pooled;
  pooled.site_id = 0;
  pooled.schema = sites.front().schema;
  for (const auto& s : sites) {
    if (s.schema.features != pooled.schema.features) {
      throw ContractError("cannot pool sites with different schemas");
    }
    pooled.train.insert(pooled.train.end(), s.train.begin(), s.train.end());
    pooled.val.insert(pooled.val.end(), s.val.begin(), s.val.end());
    pooled.test.insert(pooled.test.end(), s.test.begin(), s.test.end());
  }
  if (pooled.size() == 0) throw EmptyInputError("pooled dataset is empty");
  return pooled;
}

TrainedModel train_federated(std::vector<data::SiteDataset> sites,
                             const model::ModelConfig& config,
                             const model::TreatmentCatalog& catalog,
                             const FederationConfig& federation,
                             const ValidationMonitor& monitor) {
  federation.validate();
  TrainedModel trained;
  trained.sites = prepare_sites(std::move(sites), config, catalog);
  const auto initial =
      initialize_federation(config, trained.sites.front().pipeline.vocabulary.size(),
                            trained.sites, federation.local.seed);
  trained.result = run_federation(federation, trained.sites, initial, monitor);
  return trained;
}

TrainedModel run_centralized(std::span<const data::SiteDataset> sites,
                             const model::ModelConfig& config,
                             const model::TreatmentCatalog& catalog,
                             const FederationConfig& federation) {
  std::vector<data::SiteDataset> pooled{pool_sites(sites)};
  return train_federated(std::move(pooled), config, catalog, federation);
}

}  // namespace fedtrans::federation
