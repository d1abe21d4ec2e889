// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedtrans/cli/experiment.hpp"
#include "fedtrans/data/io.hpp"
#include "fedtrans/data/split.hpp"
#include "fedtrans/evaluation/metrics.hpp"
#include "fedtrans/text.hpp"
#include "support/finite_difference.hpp"
#include "support/metric_oracle.hpp"
#include "support/model_fixture.hpp"

using namespace fedtrans;
namespace fs = std::filesystem;
using numerics::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fedtrans_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Full-scale training defaults with the widths scaled down to d.
model::ModelConfig scaled_model(std::size_t d, std::size_t treatments) {
  model::ModelConfig m;
  m.embedding_width = d;
  m.ffn_hidden = d;
  m.predictor_hidden = d;
  m.heads_self = 4;
  m.heads_cross = 4;
  m.treatments = treatments;
  return m;
}

std::vector<data::SiteDataset> synthetic_sites(const data::SyntheticDGPConfig& dgp,
                                               std::size_t sites, double lambda,
                                               std::uint64_t seed) {
  const auto ds = data::generate_synthetic(dgp);
  const auto parts = data::partition_sites(ds.records, sites, lambda, seed);
  std::vector<data::SiteDataset> out;
  for (std::size_t s = 0; s < sites; ++s) {
    const auto split = data::split_dataset(parts[s], seed * 31 + s);
    out.push_back({s, ds.schema, split.train, split.val, split.test});
  }
  return out;
}

double site_test_rmse(const federation::TrainedModel& m, const training::Site& site) {
  const auto& best = m.result.best;
  const auto pred = model::predict_factual(site.data.test, best.global,
                                           best.heads.at(site.data.site_id), site.pipeline);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::pow(pred[i] - site.data.test[i].outcome, 2);
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

/// Factual RMSE over every site's test records, each predicted with its own head.
double pooled_test_rmse(const federation::TrainedModel& m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& site : m.sites) {
    const double r = site_test_rmse(m, site);
    sum += r * r * static_cast<double>(site.data.test.size());
    n += site.data.test.size();
  }
  return std::sqrt(sum / static_cast<double>(n));
}

double mean_baseline_rmse(const data::SiteDataset& site) {
  double mean = 0.0;
  for (const auto& r : site.train) mean += r.outcome;
  mean /= static_cast<double>(site.train.size());
  double sum = 0.0;
  for (const auto& r : site.test) sum += std::pow(r.outcome - mean, 2);
  return std::sqrt(sum / static_cast<double>(site.test.size()));
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  const auto f = oracle::make_fixture(oracle::small_config(16, 3), 8, 101, 3, 3, 0.3);
  const auto batch = f.pipeline.factual_batch(f.dataset.records);
  auto loss_of = [&](numerics::Tape& tape, const numerics::ParameterSet& all) {
    auto [s, h] = oracle::split_merged(all);
    model::BoundParameters sp(tape, s.values, true), hp(tape, h.values, true);
    auto pass = model::forward_batch(batch, sp, hp, f.pipeline.config);
    return numerics::mse_loss(pass.prediction, tape.constant(batch.targets));
  };
  const auto params = oracle::merged(f.shared, f.head);
  numerics::Tape tape;
  const auto grads = tape.backward(loss_of(tape, params));
  auto value = [&](const numerics::ParameterSet& p) {
    numerics::Tape t;
    return loss_of(t, p).value().item();
  };
  std::vector<std::string> paths;
  for (const auto& [p, t] : params) paths.push_back(p);
  numerics::Rng pick(9);
  double worst = 0.0;
  const int coords = 120;
  for (int n = 0; n < coords; ++n) {
    const auto& path = paths[pick.index(paths.size())];
    const std::size_t i = pick.index(params.at(path).size());
    const double numeric = oracle::central_difference(value, params, path, i);
    worst = std::max(worst, oracle::relative_error(grads.at(path)[i], numeric,
                                                   oracle::kModelGradientFloor));
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 60.0, std::to_string(coords) + " coordinates, max rel err " +
                                        num(worst) + ", " + num(t, 3) + " s"};
}

Outcome aggregation_oracle() {
  numerics::Rng rng(202);
  double worst = 0.0;
  bool identity = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t sites = 1 + rng.index(5);
    const std::size_t tensors = 1 + rng.index(4);
    std::vector<model::SharedParameters> sets(sites);
    std::vector<double> counts(sites);
    for (auto& c : counts) c = static_cast<double>(1 + rng.index(500));
    std::vector<numerics::Shape> shapes;
    for (std::size_t k = 0; k < tensors; ++k) shapes.push_back({1 + rng.index(6), 1 + rng.index(6)});
    for (auto& set : sets) {
      for (std::size_t k = 0; k < tensors; ++k) {
        Tensor t(shapes[k]);
        for (auto& x : t.data()) x = rng.normal(0.0, 3.0);
        set.values.emplace("p" + std::to_string(k), t);
      }
    }
    const auto agg = federation::aggregate_weighted(sets, counts);
    double total = 0.0;
    for (double c : counts) total += c;
    for (const auto& [path, t] : agg.values) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        long double expect = 0.0L;
        for (std::size_t s = 0; s < sites; ++s) {
          expect += static_cast<long double>(counts[s]) * sets[s].values.at(path)[i];
        }
        worst = std::max(worst, std::abs(static_cast<double>(expect / total) - t[i]));
      }
    }
    const std::vector<model::SharedParameters> single{sets[0]};
    const std::vector<double> one{counts[0]};
    identity = identity && federation::aggregate_weighted(single, one) == sets[0];
  }

  // Heads after a round are exactly the sites' local results.
  data::SyntheticDGPConfig dgp;
  dgp.records = 120;
  dgp.numerical_features = 3;
  dgp.seed = 7;
  const auto sites = federation::prepare_sites(synthetic_sites(dgp, 2, 0.5, 7),
                                               oracle::small_config(8, 2),
                                               model::TreatmentCatalog(2));
  const auto state = federation::initialize_federation(
      sites[0].pipeline.config, sites[0].pipeline.vocabulary.size(), sites, 3);
  federation::FederationConfig fc;
  fc.rounds = 1;
  fc.local.local_epochs = 1;
  fc.local.batch_size = 16;
  const auto outcome = federation::run_round(state, sites, fc);
  bool heads = true;
  for (const auto& site : sites) {
    const auto local = training::local_train(site, state.global, state.heads.at(site.data.site_id),
                                             fc.local, 1);
    heads = heads && outcome.state.heads.at(site.data.site_id) == local.head;
  }
  for (const auto& [path, t] : outcome.state.global.values) {
    heads = heads && !path.starts_with("predictor.");
  }
  return {worst < 1e-12 && identity && heads,
          "100 random sets, max abs err " + num(worst) + ", single-site identity " +
              (identity ? "yes" : "no") + ", heads untouched " + (heads ? "yes" : "no")};
}

Outcome metrics_oracle() {
  numerics::Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t arms = 2 + rng.index(3);
    const std::size_t n = arms + rng.index(101 - arms);
    const auto c = oracle::random_metric_case(rng, n, arms);
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    track(evaluation::rmse_factual(c.records, c.mu_hat), oracle::brute_rmse_factual(c));
    for (std::size_t j = 1; j < arms; ++j) {
      track(evaluation::pehe(c.records, c.mu_hat, j), oracle::brute_pehe(c, j));
      track(evaluation::ate_error(c.records, c.mu_hat, j), oracle::brute_ate_error(c, j));
      track(evaluation::att(c.records, j), oracle::brute_att(c, j));
      track(evaluation::att_error(c.records, c.mu_hat, j), oracle::brute_att_error(c, j));
    }
  }
  return {worst < 1e-12, "1000 instances, max abs err " + num(worst)};
}

Outcome permutation_invariance() {
  const auto f = oracle::make_fixture(oracle::small_config(16, 3), 50, 404, 3, 3, 0.3);
  auto permuted = f.pipeline;
  numerics::Rng rng(4);
  rng.shuffle(permuted.schema.features);
  const auto a = model::predict_potential_outcomes(f.dataset.records, f.shared, f.head, f.pipeline);
  const auto b = model::predict_potential_outcomes(f.dataset.records, f.shared, f.head, permuted);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return {worst < 1e-6, "50 records x 3 arms, max |dy| " + num(worst)};
}

Outcome overfit_check() {
  const auto start = Clock::now();
  data::SyntheticDGPConfig dgp;
  dgp.records = 64;
  dgp.numerical_features = 6;
  dgp.noise = 0.1;
  dgp.seed = 505;
  const auto sites = synthetic_sites(dgp, 1, 0.0, 5);
  federation::FederationConfig fc;
  fc.rounds = 100;  // 5 local epochs each: 500 epochs
  fc.patience = fc.rounds;
  fc.local.seed = 5;
  const auto m = federation::run_centralized(sites, scaled_model(32, 2), model::TreatmentCatalog(2), fc);
  double best = INFINITY;
  std::size_t first = 0;
  for (const auto& r : m.result.history) {
    const double train = r.sites[0].train_rmse;
    if (train < 0.2 && first == 0) first = r.round * fc.local.local_epochs;
    best = std::min(best, train);
  }
  const double t = seconds_since(start);
  return {best < 0.2 && t < 300.0,
          "min train RMSE-F " + num(best) + (first ? " (below 0.2 by epoch " + std::to_string(first) + ")" : "") +
              ", " + num(t, 3) + " s"};
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

federation::FederationConfig default_federation(std::uint64_t seed) {
  federation::FederationConfig fc;
  fc.local.seed = seed;
  return fc;
}

data::SyntheticDGPConfig six_hundred(std::uint64_t seed) {
  data::SyntheticDGPConfig dgp;
  dgp.records = 600;
  dgp.numerical_features = 6;
  dgp.noise = 0.1;
  dgp.seed = seed;
  return dgp;
}

Outcome federated_vs_centralized() {
  const auto start = Clock::now();
  double fed_sum = 0.0, cen_sum = 0.0;
  std::string per_seed;
  for (const auto seed : kSeeds) {
    const auto sites = synthetic_sites(six_hundred(seed), 3, 0.0, seed);
    const auto config = scaled_model(32, 2);
    const auto fed = federation::train_federated(sites, config, model::TreatmentCatalog(2),
                                                 default_federation(seed));
    const auto cen = federation::run_centralized(sites, config, model::TreatmentCatalog(2),
                                                 default_federation(seed));
    const double f = pooled_test_rmse(fed), c = pooled_test_rmse(cen);
    fed_sum += f;
    cen_sum += c;
    per_seed += " seed" + std::to_string(seed) + " " + num(f) + "/" + num(c);
  }
  const double fed = fed_sum / kSeeds.size(), cen = cen_sum / kSeeds.size();
  const double gap = (fed - cen) / cen;
  const double t = seconds_since(start);
  return {gap <= 0.2 && t < 600.0,
          "mean test RMSE-F federated " + num(fed) + " vs centralized " + num(cen) + " (" +
              num(100 * gap, 3) + "%);" + per_seed + "; " + num(t, 3) + " s"};
}

Outcome heterogeneous_federation() {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  for (const auto seed : kSeeds) {
    const auto sites = synthetic_sites(six_hundred(seed), 3, 0.8, seed);
    const auto fc = default_federation(seed);
    const auto fed = federation::train_federated(sites, scaled_model(32, 2),
                                                 model::TreatmentCatalog(2), fc);
    bool finite = true;
    for (const auto& e : fed.result.trace) finite = finite && std::isfinite(e.loss);
    const bool ended = fed.result.early_stopped || fed.result.history.size() == fc.rounds;
    ok = ok && finite && ended;
    detail += " seed" + std::to_string(seed) + "[" + std::to_string(fed.result.history.size()) +
              " rounds" + (fed.result.early_stopped ? ", early stop" : "") +
              (finite ? "" : ", NON-FINITE") + ";";
    for (const auto& site : fed.sites) {
      const double model_rmse = site_test_rmse(fed, site);
      const double baseline = mean_baseline_rmse(site.data);
      ok = ok && model_rmse < baseline;
      detail += " s" + std::to_string(site.data.site_id) + " n=" +
                std::to_string(site.data.size()) + " " + num(model_rmse) + "/" + num(baseline) +
                (model_rmse < baseline ? "" : " (worse)");
    }
    detail += "]";
  }
  return {ok, "model/mean-baseline test RMSE-F per site:" + detail + "; " +
                  num(seconds_since(start), 3) + " s"};
}

struct ZeroShotRun {
  evaluation::ZeroShotResult result;
  std::vector<federation::TrainedModel> models;  // run A, run B
};

ZeroShotRun run_zero_shot(const fs::path& root, bool twin,
                          const std::map<std::size_t, std::vector<double>>& descriptions) {
  const auto path = root / (twin ? "twin_descriptions.csv" : "novel_descriptions.csv");
  data::write_descriptions(path.string(), descriptions);
  cli::ExperimentConfig c;
  data::SyntheticDGPConfig dgp = six_hundred(808);
  dgp.treatments = 3;
  if (twin) dgp.twin_arms = {{2, 1}};
  c.synthetic = dgp;
  c.model = scaled_model(32, 3);
  c.descriptions = path;
  ZeroShotRun run;
  const evaluation::Trainer trainer = [&](const std::vector<data::SiteDataset>& sites) {
    run.models.push_back(cli::train_protocol(c, sites, 1).front());
    return run.models.back();
  };
  run.result = evaluation::zero_shot_eval(cli::build_sites(c, 1), cli::build_catalog(c), 2, trainer);
  return run;
}

Outcome zero_shot_protocol() {
  const auto start = Clock::now();
  const auto root = scratch("zero_shot");
  const auto twin = run_zero_shot(root, true, {{0, {1, 0, 0}}, {1, {0, 1, 0}}, {2, {0, 1, 0}}});
  const auto novel = run_zero_shot(root, false, {{0, {1, 0, 0}}, {1, {0, 1, 0}}, {2, {0, 0, 1}}});
  fs::remove_all(root);

  // In the zero-shot model, the held-out arm should predict exactly as its twin does, so its
  // error is compared against the twin's own test error in that model too.
  const auto& b = twin.models.at(1);
  double twin_gap = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (const auto& site : b.sites) {
    const auto mu = model::predict_potential_outcomes(site.data.test, b.result.best.global,
                                                      b.result.best.heads.at(site.data.site_id),
                                                      site.pipeline);
    for (std::size_t i = 0; i < site.data.test.size(); ++i) {
      twin_gap = std::max(twin_gap, std::abs(mu.at(i, 2) - mu.at(i, 1)));
      if (site.data.test[i].treatment == 1) {
        sum += std::pow(mu.at(i, 1) - site.data.test[i].outcome, 2);
        ++n;
      }
    }
  }
  const double trained_twin_rmse = std::sqrt(sum / static_cast<double>(n));

  const auto& t = twin.result;
  const double rel = std::abs(t.delta) / t.supervised_rmse;
  const bool same_ids = t.supervised_ids == t.zero_shot_ids &&
                        novel.result.supervised_ids == novel.result.zero_shot_ids;
  return {rel <= 0.1 && std::isfinite(novel.result.delta) && same_ids,
          "twin arm supervised " + num(t.supervised_rmse) + ", zero-shot " + num(t.zero_shot_rmse) +
              " (" + num(100 * rel, 3) + "%; zero-shot model's trained twin arm " +
              num(trained_twin_rmse) + ", max |mu2 - mu1| " + num(twin_gap) +
              "); novel arm delta " + num(novel.result.delta) + "; same test ids " +
              (same_ids ? "yes" : "no") + "; " + num(seconds_since(start), 3) + " s"};
}

cli::ExperimentConfig small_experiment(const fs::path& out) {
  cli::ExperimentConfig c;
  data::SyntheticDGPConfig dgp;
  dgp.records = 150;
  dgp.numerical_features = 4;
  dgp.categorical_features = 2;
  dgp.treatments = 3;
  dgp.seed = 909;
  c.synthetic = dgp;
  c.model.embedding_width = 16;
  c.model.ffn_hidden = 16;
  c.model.predictor_hidden = 16;
  c.model.treatments = 3;
  c.federation.rounds = 4;
  c.federation.local.local_epochs = 1;
  c.federation.local.batch_size = 32;
  c.seeds = {1};
  c.output = out;
  return c;
}

Outcome attention_export() {
  const auto root = scratch("attention");
  const auto c = small_experiment(root / "run");
  const auto gen = cli::cmd_generate(c, root / "data");
  cli::cmd_train(c);
  const auto files = cli::cmd_export_attention(root / "run" / "seed_1" / "checkpoint.bin",
                                               {gen.data, gen.schema, std::nullopt}, root / "att");
  const auto schema = data::load_schema(gen.schema.string());
  std::string expected_header = "position,[CLS]";
  for (const auto& name : schema.feature_names()) expected_header += "," + name;
  double worst = 0.0;
  bool labels = true;
  for (const auto& f : files) {
    const auto lines = text::read_lines(f.string());
    labels = labels && lines[0] == expected_header;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = text::split_csv_line(lines[i]);
      double s = 0.0;
      for (std::size_t k = 1; k < fields.size(); ++k) s += *text::parse_double(fields[k]);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  const std::size_t expected =
      c.model.encoder_layers * c.model.heads_self + c.model.heads_cross * c.model.treatments;
  fs::remove_all(root);
  return {worst < 1e-6 && labels && files.size() == expected,
          std::to_string(files.size()) + " files (expected " + std::to_string(expected) +
              "), max |row sum - 1| " + num(worst) + ", labels " + (labels ? "match" : "differ")};
}

Outcome determinism() {
  const auto root = scratch("determinism");
  const auto a = cli::cmd_train(small_experiment(root / "a"));
  const auto b = cli::cmd_train(small_experiment(root / "b"));
  std::vector<std::string> differing;
  for (const char* f : {"checkpoint.bin", "shared.bin", "metrics.json", "metrics.csv",
                        "history.csv", "loss_trace.csv"}) {
    if (slurp(a.runs.at(0).directory / f) != slurp(b.runs.at(0).directory / f)) {
      differing.push_back(f);
    }
  }
  const bool summary = slurp(a.summary) == slurp(b.summary);
  fs::remove_all(root);
  std::string detail = differing.empty() && summary ? "checkpoint, metrics and history identical"
                                                    : "differing:";
  for (const auto& d : differing) detail += " " + d;
  return {differing.empty() && summary, detail};
}

Outcome early_stopping() {
  data::SyntheticDGPConfig dgp;
  dgp.records = 60;
  dgp.numerical_features = 3;
  dgp.seed = 1111;
  const auto sites = synthetic_sites(dgp, 2, 0.0, 11);
  const auto config = oracle::small_config(8, 2);
  federation::FederationConfig fc;  // defaults: 200 rounds, patience 20
  fc.local.local_epochs = 1;
  fc.local.batch_size = 32;
  const auto worsening = [](std::size_t round, double) { return static_cast<double>(round); };
  const auto run = federation::train_federated(sites, config, model::TreatmentCatalog(2), fc, worsening);
  std::size_t non_improving = 0;
  for (const auto& r : run.result.history) non_improving += r.improved ? 0 : 1;
  auto one = fc;
  one.rounds = 1;
  const auto first = federation::train_federated(sites, config, model::TreatmentCatalog(2), one);
  const bool best_is_first = run.result.best_round == 1 &&
                             run.result.best.global == first.result.last.global &&
                             run.result.best.heads == first.result.last.heads;
  const bool ok = run.result.early_stopped && non_improving == fc.patience &&
                  run.result.history.size() == fc.patience + 1 && best_is_first;
  return {ok, std::to_string(run.result.history.size()) + " rounds run, " +
                  std::to_string(non_improving) + " non-improving (patience " +
                  std::to_string(fc.patience) + "), best checkpoint from round " +
                  std::to_string(run.result.best_round) +
                  (best_is_first ? " matches a one-round run" : " DOES NOT match round 1")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"aggregation oracle", aggregation_oracle},
      {"metrics oracle", metrics_oracle},
      {"permutation invariance", permutation_invariance},
      {"overfit check", overfit_check},
      {"federated vs centralized", federated_vs_centralized},
      {"heterogeneous federation", heterogeneous_federation},
      {"zero-shot protocol", zero_shot_protocol},
      {"attention export", attention_export},
      {"determinism", determinism},
      {"early stopping", early_stopping},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected.empty() && !selected.contains(k + 1)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
