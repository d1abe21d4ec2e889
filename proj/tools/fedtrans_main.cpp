#include <CLI11.hpp>

#include <iostream>

#include "fedtrans/cli/experiment.hpp"

namespace cli = fedtrans::cli;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string protocol;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
}

void add_training(CLI::App* cmd, Overrides& o) {
  auto* seeds = cmd->add_option("--seeds", o.seeds, "Comma-separated seeds")->delimiter(',');
  cmd->add_option("--seed", o.seed, "Single seed")->excludes(seeds);
  cmd->add_option("--protocol", o.protocol, "federated, centralized or local")
      ->check(CLI::IsMember({"federated", "centralized", "local"}));
}

cli::ExperimentConfig load(const Overrides& o) {
  auto config = cli::load_experiment_config(o.config);
  if (!o.out.empty()) config.output = o.out;
  if (!o.seeds.empty()) config.seeds = o.seeds;
  if (o.seed) config.seeds = {*o.seed};
  if (!o.protocol.empty()) config.protocol = cli::parse_protocol(o.protocol);
  config.validate();
  return config;
}

int report_failures(const std::vector<cli::SeedFailure>& failures) {
  for (const auto& f : failures) {
    std::cerr << "seed " << f.seed << " failed: " << f.message << "\n";
  }
  return failures.empty() ? cli::kExitOk : failures.front().exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated treatment-effect estimation with transformer encoders"};
  app.require_subcommand(1);

  Overrides gen, train, zero;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset with ground truth");
  add_common(generate, gen);

  auto* train_cmd = app.add_subcommand("train", "Train every seed and summarize test metrics");
  add_common(train_cmd, train);
  add_training(train_cmd, train);

  std::size_t held_out = 0;
  std::string descriptions;
  auto* zero_cmd = app.add_subcommand("zero-shot", "Supervised vs zero-shot error on a held-out arm");
  add_common(zero_cmd, zero);
  add_training(zero_cmd, zero);
  zero_cmd->add_option("--held-out", held_out, "Treatment excluded from training")->required();
  zero_cmd->add_option("--descriptions", descriptions, "Treatment description vectors")
      ->check(CLI::ExistingFile);

  std::string checkpoint, data_path, schema_path, attention_out;
  std::optional<std::size_t> site;
  auto* export_cmd =
      app.add_subcommand("export-attention", "Write averaged attention maps as labeled CSV files");
  export_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--schema", schema_path, "Schema sidecar")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", attention_out, "Output directory")->required();
  export_cmd->add_option("--site", site, "Site whose predictor head and standardizer to use");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*generate) {
      auto config = cli::load_experiment_config(gen.config);
      const auto out = gen.out.empty() ? config.output : std::filesystem::path(gen.out);
      const auto files = cli::cmd_generate(config, out);
      std::cout << "wrote " << files.data.string() << "\n";
      return cli::kExitOk;
    }
    if (*train_cmd) {
      const auto summary = cli::cmd_train(load(train));
      for (const auto& run : summary.runs) {
        std::cout << "seed " << run.seed << ": test RMSE-F "
                  << run.report.pooled->rmse_factual << " (" << run.directory.string() << ")\n";
      }
      std::cout << "summary " << summary.summary.string() << "\n";
      return report_failures(summary.failures);
    }
    if (*zero_cmd) {
      auto config = load(zero);
      if (!descriptions.empty()) config.descriptions = descriptions;
      const auto summary = cli::cmd_zero_shot(config, held_out);
      for (const auto& [seed, r] : summary.runs) {
        std::cout << "seed " << seed << ": supervised " << r.supervised_rmse << ", zero-shot "
                  << r.zero_shot_rmse << ", delta " << r.delta << "\n";
      }
      return report_failures(summary.failures);
    }
    const auto files = cli::cmd_export_attention(checkpoint, {data_path, schema_path, std::nullopt},
                                                 attention_out, site);
    std::cout << "wrote " << files.size() << " attention files to " << attention_out << "\n";
    return cli::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
}
