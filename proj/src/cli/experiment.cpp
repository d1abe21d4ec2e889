#include "fedtrans/cli/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "fedtrans/data/io.hpp"
#include "fedtrans/data/split.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/evaluation/attention.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::cli {

using nlohmann::json;

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::federated:
      return "federated";
    case Protocol::centralized:
      return "centralized";
    case Protocol::local:
      return "local";
  }
  return "federated";
}

Protocol parse_protocol(const std::string& text) {
  if (text == "federated") return Protocol::federated;
  if (text == "centralized") return Protocol::centralized;
  if (text == "local") return Protocol::local;
  throw ConfigurationError("unknown protocol '" + text +
                           "' (expected federated, centralized or local)");
}

// ---------------------------------------------------------------------------
// Configuration files

namespace {

void check_keys(const json& j, const std::string& what, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigurationError(what + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigurationError(what + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

FileSource file_source_from_json(const json& j, const fs::path& base) {
  check_keys(j, "data file", {"data", "schema", "potential_outcomes"});
  if (!j.contains("data") || !j.contains("schema")) {
    throw ConfigurationError("data file entries need 'data' and 'schema'");
  }
  FileSource f{resolve(base, j.at("data").get<std::string>()),
               resolve(base, j.at("schema").get<std::string>()), std::nullopt};
  if (j.contains("potential_outcomes")) {
    f.potential_outcomes = resolve(base, j.at("potential_outcomes").get<std::string>());
  }
  return f;
}

json synthetic_to_json(const data::SyntheticDGPConfig& c) {
  json twins = json::object();
  for (const auto& [arm, source] : c.twin_arms) twins[std::to_string(arm)] = source;
  return {{"records", c.records},
          {"numerical_features", c.numerical_features},
          {"categorical_features", c.categorical_features},
          {"categorical_levels", c.categorical_levels},
          {"treatments", c.treatments},
          {"coefficient_scale", c.coefficient_scale},
          {"intercept_scale", c.intercept_scale},
          {"interaction_scale", c.interaction_scale},
          {"propensity_sharpness", c.propensity_sharpness},
          {"noise", c.noise},
          {"seed", c.seed},
          {"twin_arms", twins}};
}

}  // namespace

data::SyntheticDGPConfig synthetic_config_from_json(const json& j) {
  check_keys(j, "synthetic config",
             {"records", "numerical_features", "categorical_features", "categorical_levels",
              "treatments", "coefficient_scale", "intercept_scale", "interaction_scale",
              "propensity_sharpness", "noise", "seed", "twin_arms"});
  data::SyntheticDGPConfig c;
  try {
    read(j, "records", c.records);
    read(j, "numerical_features", c.numerical_features);
    read(j, "categorical_features", c.categorical_features);
    read(j, "categorical_levels", c.categorical_levels);
    read(j, "treatments", c.treatments);
    read(j, "coefficient_scale", c.coefficient_scale);
    read(j, "intercept_scale", c.intercept_scale);
    read(j, "interaction_scale", c.interaction_scale);
    read(j, "propensity_sharpness", c.propensity_sharpness);
    read(j, "noise", c.noise);
    read(j, "seed", c.seed);
    if (j.contains("twin_arms")) {
      for (const auto& [arm, source] : j.at("twin_arms").items()) {
        const auto id = text::parse_integer(arm);
        if (!id || *id < 0) throw ConfigurationError("twin_arms keys must be arm ids");
        c.twin_arms[static_cast<std::size_t>(*id)] = source.get<std::size_t>();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (synthetic.has_value() == !files.empty()) {
    throw ConfigurationError("exactly one data source (synthetic or files) must be given");
  }
  if (seeds.empty()) throw ConfigurationError("seeds must not be empty");
  if (partition.sites == 0) throw ConfigurationError("partition needs at least one site");
  if (!(partition.heterogeneity >= 0.0 && partition.heterogeneity <= 1.0)) {
    throw ConfigurationError("partition heterogeneity must lie in [0, 1]");
  }
  model.validate();
  federation.validate();
  if (synthetic) {
    synthetic->validate();
    if (synthetic->treatments != model.treatments) {
      throw ConfigurationError("synthetic data has " + std::to_string(synthetic->treatments) +
                               " treatments but the model expects " +
                               std::to_string(model.treatments));
    }
  }
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base) {
  check_keys(j, "experiment config",
             {"protocol", "data", "partition", "model", "training", "federation", "seeds",
              "output", "descriptions"});
  ExperimentConfig c;
  try {
    if (j.contains("protocol")) c.protocol = parse_protocol(j.at("protocol").get<std::string>());
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data", {"synthetic", "files"});
      if (d.contains("synthetic")) c.synthetic = synthetic_config_from_json(d.at("synthetic"));
      if (d.contains("files")) {
        for (const auto& f : d.at("files")) c.files.push_back(file_source_from_json(f, base));
      }
    }
    if (j.contains("partition")) {
      const auto& p = j.at("partition");
      check_keys(p, "partition", {"sites", "heterogeneity"});
      read(p, "sites", c.partition.sites);
      read(p, "heterogeneity", c.partition.heterogeneity);
    }
    if (j.contains("model")) {
      c.model = model::model_config_from_json(j.at("model"));
      if (c.synthetic && !j.at("model").contains("treatments")) {
        c.model.treatments = c.synthetic->treatments;
      }
    } else if (c.synthetic) {
      c.model.treatments = c.synthetic->treatments;
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, "training", {"local_epochs", "batch_size", "learning_rate", "alternation"});
      auto& local = c.federation.local;
      read(t, "local_epochs", local.local_epochs);
      read(t, "batch_size", local.batch_size);
      read(t, "learning_rate", local.learning_rate);
      if (t.contains("alternation")) {
        local.alternation = training::parse_alternation(t.at("alternation").get<std::string>());
      }
    }
    if (j.contains("federation")) {
      const auto& f = j.at("federation");
      check_keys(f, "federation", {"rounds", "patience"});
      read(f, "rounds", c.federation.rounds);
      read(f, "patience", c.federation.patience);
    }
    read(j, "seeds", c.seeds);
    if (j.contains("output")) c.output = resolve(base, j.at("output").get<std::string>());
    if (j.contains("descriptions")) {
      c.descriptions = resolve(base, j.at("descriptions").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigurationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json data = json::object();
  if (c.synthetic) data["synthetic"] = synthetic_to_json(*c.synthetic);
  if (!c.files.empty()) {
    json files = json::array();
    for (const auto& f : c.files) {
      json e{{"data", f.data.string()}, {"schema", f.schema.string()}};
      if (f.potential_outcomes) e["potential_outcomes"] = f.potential_outcomes->string();
      files.push_back(e);
    }
    data["files"] = files;
  }
  const auto& local = c.federation.local;
  json out{{"protocol", to_string(c.protocol)},
           {"data", data},
           {"partition", {{"sites", c.partition.sites}, {"heterogeneity", c.partition.heterogeneity}}},
           {"model", model::to_json(c.model)},
           {"training",
            {{"local_epochs", local.local_epochs},
             {"batch_size", local.batch_size},
             {"learning_rate", local.learning_rate},
             {"alternation", training::to_string(local.alternation)}}},
           {"federation", {{"rounds", c.federation.rounds}, {"patience", c.federation.patience}}},
           {"seeds", c.seeds},
           {"output", c.output.string()}};
  if (c.descriptions) out["descriptions"] = c.descriptions->string();
  return out;
}

// ---------------------------------------------------------------------------
// Data and models

namespace {

data::LoadedDataset load_source(const FileSource& f, std::size_t treatments) {
  std::optional<std::string> po;
  if (f.potential_outcomes) po = f.potential_outcomes->string();
  return data::load_dataset(f.data.string(), f.schema.string(), treatments, po);
}

data::SiteDataset split_site(std::size_t id, const data::DatasetSchema& schema,
                             const std::vector<data::DataRecord>& records, std::uint64_t seed) {
  const auto split = data::split_dataset(records, numerics::derive_seed(seed, {0x5173, id}));
  return {id, schema, split.train, split.val, split.test};
}

}  // namespace

std::vector<data::SiteDataset> build_sites(const ExperimentConfig& config, std::uint64_t seed) {
  std::vector<data::SiteDataset> sites;
  if (config.files.size() > 1) {
    for (std::size_t s = 0; s < config.files.size(); ++s) {
      const auto loaded = load_source(config.files[s], config.model.treatments);
      sites.push_back(split_site(s, loaded.schema, loaded.records, seed));
    }
    return sites;
  }
  data::LoadedDataset loaded;
  if (config.synthetic) {
    auto ds = data::generate_synthetic(*config.synthetic);
    loaded = {std::move(ds.schema), std::move(ds.records)};
  } else {
    loaded = load_source(config.files.front(), config.model.treatments);
  }
  const auto parts = data::partition_sites(loaded.records, config.partition.sites,
                                           config.partition.heterogeneity, seed);
  for (std::size_t s = 0; s < parts.size(); ++s) {
    sites.push_back(split_site(s, loaded.schema, parts[s], seed));
  }
  return sites;
}

model::ModelConfig resolved_model(const ExperimentConfig& config) {
  auto m = config.model;
  if (!config.descriptions) return m;
  const auto descriptions = data::load_descriptions(config.descriptions->string());
  if (descriptions.empty()) throw ConfigurationError("description file has no rows");
  const std::size_t width = descriptions.begin()->second.size();
  if (m.description_dim && *m.description_dim != width) {
    throw ConfigurationError("description vectors have width " + std::to_string(width) +
                             " but the model expects " + std::to_string(*m.description_dim));
  }
  m.description_dim = width;
  return m;
}

model::TreatmentCatalog build_catalog(const ExperimentConfig& config) {
  if (!config.descriptions) return model::TreatmentCatalog(config.model.treatments);
  return model::TreatmentCatalog(config.model.treatments,
                                 data::load_descriptions(config.descriptions->string()));
}

std::vector<federation::TrainedModel> train_protocol(const ExperimentConfig& config,
                                                     const std::vector<data::SiteDataset>& sites,
                                                     std::uint64_t seed) {
  auto fed = config.federation;
  fed.local.seed = seed;
  const auto model = resolved_model(config);
  const auto catalog = build_catalog(config);
  switch (config.protocol) {
    case Protocol::federated:
      return {federation::train_federated(sites, model, catalog, fed)};
    case Protocol::centralized:
      return {federation::run_centralized(sites, model, catalog, fed)};
    case Protocol::local:
      break;
  }
  std::vector<federation::TrainedModel> models;
  for (const auto& site : sites) models.push_back(federation::train_federated({site}, model, catalog, fed));
  return models;
}

namespace {

json schema_to_json(const tabular::DatasetSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) {
    features.push_back({{"name", f.name}, {"kind", tabular::to_string(f.kind)}});
  }
  return {{"features", features},
          {"treatment_column", schema.treatment_column},
          {"outcome_column", schema.outcome_column}};
}

tabular::DatasetSchema schema_from_json(const json& j) {
  tabular::DatasetSchema s;
  for (const auto& f : j.at("features")) {
    s.features.push_back({f.at("name").get<std::string>(),
                          tabular::parse_feature_kind(f.at("kind").get<std::string>())});
  }
  s.treatment_column = j.at("treatment_column").get<std::string>();
  s.outcome_column = j.at("outcome_column").get<std::string>();
  return s;
}

}  // namespace

model::Checkpoint make_checkpoint(const federation::TrainedModel& trained,
                                  const ExperimentConfig& config, std::uint64_t seed) {
  const auto& best = trained.result.best;
  const auto& first = trained.sites.front().pipeline;
  model::Checkpoint ck;
  json sites = json::object();
  for (const auto& site : trained.sites) {
    json stats = json::object();
    for (const auto& [feature, s] : site.pipeline.standardizer.stats()) {
      stats[feature] = {s.mean, s.stddev};
    }
    sites[std::to_string(site.data.site_id)] = {{"standardizer", stats},
                                                {"schema", schema_to_json(site.data.schema)}};
    ck.sections[model::head_section(site.data.site_id)] = best.heads.at(site.data.site_id).values;
  }
  ck.sections[model::kSharedSection] = best.global.values;
  json descriptions = nullptr;
  if (first.catalog.descriptions()) {
    descriptions = json::object();
    for (const auto& [j, v] : *first.catalog.descriptions()) descriptions[std::to_string(j)] = v;
  }
  ck.metadata = {{"protocol", to_string(config.protocol)},
                 {"seed", seed},
                 {"best_round", trained.result.best_round},
                 {"rounds_run", trained.result.history.size()},
                 {"early_stopped", trained.result.early_stopped},
                 {"model", model::to_json(first.config)},
                 {"vocabulary", first.vocabulary.tokens()},
                 {"descriptions", descriptions},
                 {"sites", sites}};
  return ck;
}

RestoredModel restore_model(const model::Checkpoint& ck, std::optional<std::size_t> site) {
  RestoredModel r;
  try {
    const auto& meta = ck.metadata;
    const auto& sites = meta.at("sites");
    if (sites.empty()) throw LoadError("checkpoint lists no sites");
    r.site = site ? *site : static_cast<std::size_t>(*text::parse_integer(sites.begin().key()));
    for (const auto& [key, value] : sites.items()) {
      if (!site && *text::parse_integer(key) < static_cast<long long>(r.site)) {
        r.site = static_cast<std::size_t>(*text::parse_integer(key));
      }
    }
    const std::string key = std::to_string(r.site);
    if (!sites.contains(key)) {
      throw ConfigurationError("checkpoint has no predictor head for site " + key);
    }
    const auto& entry = sites.at(key);
    r.pipeline.config = model::model_config_from_json(meta.at("model"));
    r.pipeline.schema = schema_from_json(entry.at("schema"));
    r.pipeline.vocabulary =
        tabular::Vocabulary::from_tokens(meta.at("vocabulary").get<std::vector<std::string>>());
    std::map<std::string, tabular::Standardizer::Stats> stats;
    for (const auto& [feature, v] : entry.at("standardizer").items()) {
      stats[feature] = {v.at(0).get<double>(), v.at(1).get<double>()};
    }
    r.pipeline.standardizer = tabular::Standardizer(std::move(stats));
    const std::size_t K = r.pipeline.config.treatments;
    if (meta.at("descriptions").is_null()) {
      r.pipeline.catalog = model::TreatmentCatalog(K);
    } else {
      std::map<std::size_t, std::vector<double>> d;
      for (const auto& [j, v] : meta.at("descriptions").items()) {
        d[static_cast<std::size_t>(*text::parse_integer(j))] = v.get<std::vector<double>>();
      }
      r.pipeline.catalog = model::TreatmentCatalog(K, std::move(d));
    }
    const auto shared = ck.sections.find(model::kSharedSection);
    const auto head = ck.sections.find(model::head_section(r.site));
    if (shared == ck.sections.end() || head == ck.sections.end()) {
      throw LoadError("checkpoint is missing the shared or head section");
    }
    r.shared.values = shared->second;
    r.head.values = head->second;
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint metadata: ") + e.what());
  }
  model::check_layout(r.shared, r.pipeline.config, r.pipeline.vocabulary.size());
  model::check_layout(r.head, r.pipeline.config);
  return r;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

std::string join_lines(const std::string& header, const std::vector<std::string>& rows) {
  std::string out = header + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

std::string history_csv(const federation::TrainedModel& trained) {
  std::vector<std::size_t> ids;
  for (const auto& s : trained.sites) ids.push_back(s.data.site_id);
  std::vector<std::string> rows;
  for (const auto& r : trained.result.history) rows.push_back(federation::format_round(r));
  return join_lines(federation::round_history_header(ids), rows);
}

std::string trace_csv(const federation::TrainedModel& trained) {
  std::vector<std::string> rows;
  for (const auto& e : trained.result.trace) rows.push_back(training::format_loss_trace(e));
  return join_lines(training::loss_trace_header(), rows);
}

fs::path seed_directory(const ExperimentConfig& config, std::uint64_t seed) {
  auto dir = config.output / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);
  return dir;
}

std::string cell(const std::optional<double>& v) { return v ? text::format_double(*v) : ""; }

std::string summary_csv(const std::vector<SeedRun>& runs, std::size_t treatments) {
  std::string header = "seed,records,rmse_factual";
  for (std::size_t j = 1; j < treatments; ++j) {
    const auto t = std::to_string(j);
    header += ",pehe_" + t + ",abs_ate_error_" + t + ",att_error_" + t;
  }
  const std::size_t columns = 1 + 3 * (treatments - 1);
  std::vector<std::vector<double>> values(columns);
  std::vector<std::string> rows;
  for (const auto& run : runs) {
    const auto& p = *run.report.pooled;
    std::vector<std::optional<double>> cells{p.rmse_factual};
    for (const auto& t : p.treatments) {
      cells.push_back(t.pehe);
      cells.push_back(t.ate_error ? std::optional<double>(std::abs(*t.ate_error)) : std::nullopt);
      cells.push_back(t.att_error);
    }
    cells.resize(columns);
    std::string row = std::to_string(run.seed) + "," + std::to_string(p.records);
    for (std::size_t c = 0; c < columns; ++c) {
      row += "," + cell(cells[c]);
      if (cells[c]) values[c].push_back(*cells[c]);
    }
    rows.push_back(row);
  }
  if (!runs.empty()) {
    std::string row = "mean±std,";
    for (const auto& v : values) row += "," + (v.empty() ? std::string() : mean_std(v));
    rows.push_back(row);
  }
  return join_lines(header, rows);
}

template <typename F>
bool run_seed(std::uint64_t seed, std::vector<SeedFailure>& failures, F&& body) {
  try {
    body();
    return true;
  } catch (const std::exception& e) {
    failures.push_back({seed, e.what(), exit_code_for(e)});
    return false;
  }
}

}  // namespace

GeneratedFiles cmd_generate(const ExperimentConfig& config, const fs::path& out) {
  if (!config.synthetic) throw ConfigurationError("generate needs a synthetic data config");
  const auto ds = data::generate_synthetic(*config.synthetic);
  fs::create_directories(out);
  GeneratedFiles files{out / "data.csv", out / "schema.csv", out / "potential_outcomes.csv"};
  data::write_dataset(files.data.string(), ds.schema, ds.records);
  data::write_schema(files.schema.string(), ds.schema);
  data::write_potential_outcomes(files.potential_outcomes.string(), ds.records,
                                 config.synthetic->treatments);
  return files;
}

TrainSummary cmd_train(const ExperimentConfig& config) {
  config.validate();
  TrainSummary summary;
  fs::create_directories(config.output);
  write_text(config.output / "config.json", to_json(config).dump(2) + "\n");
  for (const auto seed : config.seeds) {
    run_seed(seed, summary.failures, [&] {
      const auto dir = seed_directory(config, seed);
      const auto sites = build_sites(config, seed);
      const auto models = train_protocol(config, sites, seed);
      if (config.protocol == Protocol::local) {
        for (const auto& m : models) {
          const auto id = std::to_string(m.sites.front().data.site_id);
          model::write_checkpoint((dir / ("checkpoint_site" + id + ".bin")).string(),
                                  make_checkpoint(m, config, seed));
          write_text(dir / ("history_site" + id + ".csv"), history_csv(m));
          write_text(dir / ("loss_trace_site" + id + ".csv"), trace_csv(m));
        }
      } else {
        const auto& m = models.front();
        model::write_checkpoint((dir / "checkpoint.bin").string(), make_checkpoint(m, config, seed));
        write_text(dir / "shared.bin", model::serialize_shared(m.result.best.global));
        write_text(dir / "history.csv", history_csv(m));
        write_text(dir / "loss_trace.csv", trace_csv(m));
      }
      auto report = evaluation::evaluate_models(models);
      auto metrics = evaluation::to_json(report);
      metrics["seed"] = seed;
      metrics["protocol"] = to_string(config.protocol);
      write_text(dir / "metrics.json", metrics.dump(2) + "\n");
      write_text(dir / "metrics.csv",
                 join_lines(evaluation::metrics_csv_header(), evaluation::metrics_csv_rows(report)));
      summary.runs.push_back({seed, dir, std::move(report)});
    });
  }
  summary.summary = config.output / "summary.csv";
  write_text(summary.summary, summary_csv(summary.runs, config.model.treatments));
  return summary;
}

ZeroShotSummary cmd_zero_shot(const ExperimentConfig& config, std::size_t held_out) {
  config.validate();
  if (config.protocol == Protocol::local) {
    throw ConfigurationError("zero-shot runs need a federated or centralized protocol");
  }
  if (!config.descriptions) {
    throw ConfigurationError("zero-shot runs need a treatment description file");
  }
  const auto catalog = build_catalog(config);
  ZeroShotSummary summary;
  fs::create_directories(config.output);
  const std::string header = "held_out,supervised,zero_shot,delta";
  std::vector<std::string> rows;
  std::vector<double> sup, zs, delta;
  for (const auto seed : config.seeds) {
    run_seed(seed, summary.failures, [&] {
      const auto dir = seed_directory(config, seed);
      const auto sites = build_sites(config, seed);
      const evaluation::Trainer trainer = [&](const std::vector<data::SiteDataset>& s) {
        return train_protocol(config, s, seed).front();
      };
      const auto r = evaluation::zero_shot_eval(sites, catalog, held_out, trainer);
      const std::string row = std::to_string(held_out) + "," +
                              text::format_double(r.supervised_rmse) + "," +
                              text::format_double(r.zero_shot_rmse) + "," +
                              text::format_double(r.delta);
      write_text(dir / "zero_shot.csv", join_lines(header, {row}));
      rows.push_back(std::to_string(seed) + "," + row);
      sup.push_back(r.supervised_rmse);
      zs.push_back(r.zero_shot_rmse);
      delta.push_back(r.delta);
      summary.runs.emplace_back(seed, r);
    });
  }
  if (!summary.runs.empty()) {
    rows.push_back("mean±std," + std::to_string(held_out) + "," + mean_std(sup) + "," +
                   mean_std(zs) + "," + mean_std(delta));
  }
  summary.table = config.output / "zero_shot_summary.csv";
  write_text(summary.table, join_lines("seed," + header, rows));
  return summary;
}

std::vector<fs::path> cmd_export_attention(const fs::path& checkpoint, const FileSource& dataset,
                                           const fs::path& out, std::optional<std::size_t> site) {
  const auto restored = restore_model(model::read_checkpoint(checkpoint.string()), site);
  const auto schema = data::load_schema(dataset.schema.string());
  const auto& expected = restored.pipeline.schema;
  if (schema.features != expected.features) {
    std::string diff;
    const auto names = schema.feature_names();
    const auto want = expected.feature_names();
    for (std::size_t i = 0; i < std::max(names.size(), want.size()); ++i) {
      const std::string got = i < names.size() ? names[i] : "<none>";
      const std::string exp = i < want.size() ? want[i] : "<none>";
      const bool kinds_differ = i < names.size() && i < want.size() &&
                                schema.features[i].kind != expected.features[i].kind;
      if (got != exp || kinds_differ) {
        diff += (diff.empty() ? "" : "; ") + std::string("position ") + std::to_string(i) +
                ": dataset '" + got + "' vs checkpoint '" + exp + "'";
      }
    }
    throw ConfigurationError("dataset schema does not match the checkpoint (" + diff + ")");
  }
  const auto records =
      data::load_records(dataset.data.string(), schema, restored.pipeline.config.treatments);
  const auto snapshot = evaluation::attention_snapshot(records, restored.shared, restored.head,
                                                       restored.pipeline);
  return evaluation::export_attention(snapshot, out);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigurationError*>(&e)) return kExitUsage;
  if (dynamic_cast<const LoadError*>(&e)) return kExitLoad;
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  return kExitRuntime;
}

std::string mean_std(const std::vector<double>& values) {
  if (values.empty()) return "";
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd =
      values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g±%.6g", mean, sd);
  return buf;
}

}  // namespace fedtrans::cli
