#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtrans/data/synthetic.hpp"
#include "fedtrans/evaluation/evaluate.hpp"
#include "fedtrans/federation/federation.hpp"
#include "fedtrans/model/checkpoint.hpp"

namespace fedtrans::cli {

namespace fs = std::filesystem;

enum class Protocol { federated, centralized, local };

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& text);

/// A data file with its schema sidecar and optional ground-truth outcomes.
struct FileSource {
  fs::path data;
  fs::path schema;
  std::optional<fs::path> potential_outcomes;
};

struct PartitionConfig {
  std::size_t sites = 3;
  double heterogeneity = 0.0;
};

/// One experiment: where the data comes from, how it is split into sites, and how to train.
/// A single file (or a synthetic dataset) is partitioned into `partition.sites` sites; a list
/// of several files is taken as one file per site.
struct ExperimentConfig {
  Protocol protocol = Protocol::federated;
  std::optional<data::SyntheticDGPConfig> synthetic;
  std::vector<FileSource> files;
  PartitionConfig partition;
  model::ModelConfig model;
  federation::FederationConfig federation;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  fs::path output = "runs";
  std::optional<fs::path> descriptions;

  void validate() const;
};

/// Unknown keys are rejected. Relative paths resolve against `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const fs::path& base = {});
ExperimentConfig load_experiment_config(const fs::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

data::SyntheticDGPConfig synthetic_config_from_json(const nlohmann::json& j);

/// The experiment's sites for one seed, split 70:15:15.
std::vector<data::SiteDataset> build_sites(const ExperimentConfig& config, std::uint64_t seed);

/// Model config with the description width filled in from the description file.
model::ModelConfig resolved_model(const ExperimentConfig& config);
model::TreatmentCatalog build_catalog(const ExperimentConfig& config);

/// Trains under the configured protocol. The local protocol returns one model per site.
std::vector<federation::TrainedModel> train_protocol(const ExperimentConfig& config,
                                                     const std::vector<data::SiteDataset>& sites,
                                                     std::uint64_t seed);

/// Best state of a trained model plus everything needed to rebuild its input pipelines.
model::Checkpoint make_checkpoint(const federation::TrainedModel& model,
                                  const ExperimentConfig& config, std::uint64_t seed);

/// Pipeline for one site's head rebuilt from checkpoint metadata.
struct RestoredModel {
  model::SharedParameters shared;
  model::PredictorHead head;
  model::InputPipeline pipeline;
  std::size_t site = 0;
};
RestoredModel restore_model(const model::Checkpoint& checkpoint,
                            std::optional<std::size_t> site = {});

// Commands. Each writes its files and returns what it produced.

struct GeneratedFiles {
  fs::path data, schema, potential_outcomes;
};
GeneratedFiles cmd_generate(const ExperimentConfig& config, const fs::path& out);

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string message;
  int exit_code = 1;
};

struct SeedRun {
  std::uint64_t seed = 0;
  fs::path directory;
  evaluation::MetricsReport report;
};

struct TrainSummary {
  std::vector<SeedRun> runs;
  std::vector<SeedFailure> failures;
  fs::path summary;
};
TrainSummary cmd_train(const ExperimentConfig& config);

struct ZeroShotSummary {
  std::vector<std::pair<std::uint64_t, evaluation::ZeroShotResult>> runs;
  std::vector<SeedFailure> failures;
  fs::path table;
};
ZeroShotSummary cmd_zero_shot(const ExperimentConfig& config, std::size_t held_out);

std::vector<fs::path> cmd_export_attention(const fs::path& checkpoint, const FileSource& dataset,
                                           const fs::path& out,
                                           std::optional<std::size_t> site = {});

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitLoad = 3;
inline constexpr int kExitDivergence = 4;

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Mean and sample standard deviation (0 for a single value) formatted "mean±std".
std::string mean_std(const std::vector<double>& values);

}  // namespace fedtrans::cli
