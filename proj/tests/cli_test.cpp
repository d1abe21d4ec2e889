#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "fedtrans/cli/experiment.hpp"
#include "fedtrans/data/io.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/text.hpp"
#include "support/temp_dir.hpp"

using namespace fedtrans;
using namespace fedtrans::cli;
using nlohmann::json;
using oracle::TempDir;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json tiny_config(const fs::path& out) {
  return {{"data", {{"synthetic", {{"records", 90}, {"numerical_features", 3},
                                   {"categorical_features", 1}, {"seed", 5}}}}},
          {"partition", {{"sites", 2}}},
          {"model", {{"embedding_width", 8}, {"heads_self", 2}, {"heads_cross", 2},
                     {"ffn_hidden", 8}, {"predictor_hidden", 8}}},
          {"training", {{"local_epochs", 1}, {"batch_size", 32}}},
          {"federation", {{"rounds", 3}, {"patience", 2}}},
          {"seeds", {1}},
          {"output", out.string()}};
}

std::size_t line_count(const fs::path& path) { return text::read_lines(path.string()).size(); }

}  // namespace

TEST(ExperimentConfig, DefaultsMatchTheFullScaleSetup) {
  const auto c = experiment_config_from_json({{"data", {{"synthetic", json::object()}}}});
  EXPECT_EQ(c.protocol, Protocol::federated);
  EXPECT_EQ(c.federation.rounds, 200u);
  EXPECT_EQ(c.federation.patience, 20u);
  EXPECT_EQ(c.federation.local.local_epochs, 5u);
  EXPECT_EQ(c.federation.local.batch_size, 128u);
  EXPECT_EQ(c.federation.local.learning_rate, 5e-3);
  EXPECT_EQ(c.model.embedding_width, 256u);
  EXPECT_EQ(c.model.encoder_layers, 2u);
  EXPECT_EQ(c.model.heads_self, 8u);
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.model.treatments, 2u);
}

TEST(ExperimentConfig, RoundTripsThroughJson) {
  auto j = tiny_config("/tmp/x");
  j["protocol"] = "centralized";
  j["data"]["synthetic"]["twin_arms"] = {{"2", 1}};
  j["data"]["synthetic"]["treatments"] = 3;
  const auto c = experiment_config_from_json(j);
  EXPECT_EQ(c.model.treatments, 3u);
  EXPECT_EQ(c.synthetic->twin_arms.at(2), 1u);
  const auto again = experiment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(ExperimentConfig, RejectsInvalidInput) {
  auto j = tiny_config("/tmp/x");
  j["bogus"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["seeds"] = json::array();
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["data"]["files"] = {{{"data", "a.csv"}, {"schema", "s.csv"}}};
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["data"] = json::object();
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["protocol"] = "gossip";
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["training"]["learning_rate"] = "fast";
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
  j = tiny_config("/tmp/x");
  j["model"]["treatments"] = 4;
  EXPECT_THROW(experiment_config_from_json(j), ConfigurationError);
}

TEST(ExperimentConfig, RelativePathsResolveAgainstConfigDirectory) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config("out");
  j["data"] = {{"files", {{{"data", "d.csv"}, {"schema", "s.csv"}}}}};
  std::ofstream(dir.file("c.json")) << j.dump();
  const auto c = load_experiment_config(dir.file("c.json"));
  EXPECT_EQ(c.files[0].data, dir.path() / "d.csv");
  EXPECT_EQ(c.output, dir.path() / "out");
  EXPECT_THROW(load_experiment_config(dir.file("missing.json")), ConfigurationError);
}

TEST(Generate, WritesDatasetWithSidecars) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config(dir.path());
  j["data"]["synthetic"]["records"] = 100;
  j["data"]["synthetic"]["noise"] = 0.0;
  const auto c = experiment_config_from_json(j);
  const auto a = cmd_generate(c, dir.path() / "a");
  const auto b = cmd_generate(c, dir.path() / "b");
  EXPECT_EQ(line_count(a.data), 101u);
  EXPECT_EQ(slurp(a.data), slurp(b.data));
  EXPECT_EQ(slurp(a.potential_outcomes), slurp(b.potential_outcomes));
  const auto loaded =
      data::load_dataset(a.data.string(), a.schema.string(), 2, a.potential_outcomes.string());
  ASSERT_EQ(loaded.records.size(), 100u);
  for (const auto& r : loaded.records) {
    EXPECT_EQ(r.outcome, (*r.potential_outcomes)[r.treatment]);
  }
  auto files = j;
  files["data"] = {{"files", {{{"data", a.data.string()}, {"schema", a.schema.string()}}}}};
  EXPECT_THROW(cmd_generate(experiment_config_from_json(files), dir.path() / "c"),
               ConfigurationError);
}

TEST(Train, TwoSeedsGiveTwoRowsAndAMeanRow) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config(dir.path() / "run");
  j["seeds"] = {1, 2};
  const auto summary = cmd_train(experiment_config_from_json(j));
  EXPECT_TRUE(summary.failures.empty());
  ASSERT_EQ(summary.runs.size(), 2u);
  const auto lines = text::read_lines(summary.summary.string());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].substr(0, 2), "1,");
  EXPECT_EQ(lines[2].substr(0, 2), "2,");
  EXPECT_EQ(lines[3].rfind("mean±std", 0), 0u);
  for (const char* f : {"checkpoint.bin", "shared.bin", "history.csv", "loss_trace.csv",
                        "metrics.json", "metrics.csv"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "seed_1" / f)) << f;
  }
  EXPECT_LE(line_count(dir.path() / "run" / "seed_1" / "history.csv"), 1u + 3u);
}

TEST(Train, LocalProtocolWritesOneCheckpointPerSiteAndNoSharedFile) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config(dir.path() / "run");
  j["protocol"] = "local";
  j["partition"]["sites"] = 3;
  cmd_train(experiment_config_from_json(j));
  const auto seed_dir = dir.path() / "run" / "seed_1";
  EXPECT_FALSE(fs::exists(seed_dir / "shared.bin"));
  for (int s = 0; s < 3; ++s) {
    const auto ck = model::read_checkpoint(
        (seed_dir / ("checkpoint_site" + std::to_string(s) + ".bin")).string());
    EXPECT_EQ(ck.sections.size(), 2u);
    EXPECT_TRUE(ck.sections.contains(model::head_section(s)));
  }
  const auto metrics = json::parse(slurp(seed_dir / "metrics.json"));
  EXPECT_EQ(metrics["sites"].size(), 3u);
}

TEST(Train, FixedSeedIsByteIdentical) {
  TempDir dir("fedtrans_cli");
  const auto a = cmd_train(experiment_config_from_json(tiny_config(dir.path() / "a")));
  const auto b = cmd_train(experiment_config_from_json(tiny_config(dir.path() / "b")));
  for (const char* f : {"checkpoint.bin", "shared.bin", "history.csv", "loss_trace.csv",
                        "metrics.json", "metrics.csv"}) {
    EXPECT_EQ(slurp(a.runs[0].directory / f), slurp(b.runs[0].directory / f)) << f;
  }
}

TEST(Train, FailingSeedIsReportedWithItsExitCode) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config(dir.path() / "run");
  j["data"] = {{"files", {{{"data", (dir.path() / "missing.csv").string()},
                           {"schema", (dir.path() / "missing_schema.csv").string()}}}}};
  const auto summary = cmd_train(experiment_config_from_json(j));
  ASSERT_EQ(summary.failures.size(), 1u);
  EXPECT_EQ(summary.failures[0].seed, 1u);
  EXPECT_EQ(summary.failures[0].exit_code, kExitLoad);
  EXPECT_TRUE(summary.runs.empty());
}

TEST(Checkpoint, RestoresTheTrainedPipeline) {
  TempDir dir("fedtrans_cli");
  const auto c = experiment_config_from_json(tiny_config(dir.path()));
  const auto sites = build_sites(c, 1);
  const auto models = train_protocol(c, sites, 1);
  const auto ck = model::decode_checkpoint(model::encode_checkpoint(make_checkpoint(models[0], c, 1)));
  for (const auto& site : models[0].sites) {
    const auto r = restore_model(ck, site.data.site_id);
    EXPECT_EQ(r.pipeline.vocabulary, site.pipeline.vocabulary);
    EXPECT_EQ(r.pipeline.schema, site.pipeline.schema);
    const auto want = model::predict_factual(site.data.test, models[0].result.best.global,
                                             models[0].result.best.heads.at(site.data.site_id),
                                             site.pipeline);
    EXPECT_EQ(model::predict_factual(site.data.test, r.shared, r.head, r.pipeline), want);
  }
  EXPECT_THROW(restore_model(ck, 9), ConfigurationError);
}

TEST(ExportAttention, SixteenSelfMapsForTwoLayersOfEightHeads) {
  TempDir dir("fedtrans_cli");
  auto j = tiny_config(dir.path() / "run");
  j["model"]["embedding_width"] = 16;
  j["model"]["heads_self"] = 8;
  j["model"]["heads_cross"] = 4;
  const auto c = experiment_config_from_json(j);
  const auto gen = cmd_generate(c, dir.path() / "data");
  cmd_train(c);
  const auto files = cmd_export_attention(dir.path() / "run" / "seed_1" / "checkpoint.bin",
                                          {gen.data, gen.schema, std::nullopt},
                                          dir.path() / "att");
  std::size_t self = 0, cross = 0;
  for (const auto& f : files) {
    const auto name = f.filename().string();
    if (name.rfind("self_", 0) == 0) ++self;
    if (name.rfind("cross_", 0) == 0) ++cross;
    const auto lines = text::read_lines(f.string());
    EXPECT_EQ(lines[0], "position,[CLS],num_0,num_1,num_2,cat_0");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = text::split_csv_line(lines[i]);
      double s = 0.0;
      for (std::size_t k = 1; k < fields.size(); ++k) s += *text::parse_double(fields[k]);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  EXPECT_EQ(self, 16u);
  EXPECT_EQ(cross, 4u * 2u);
}

TEST(ExportAttention, SchemaMismatchNamesTheFeatures) {
  TempDir dir("fedtrans_cli");
  const auto c = experiment_config_from_json(tiny_config(dir.path() / "run"));
  const auto gen = cmd_generate(c, dir.path() / "data");
  cmd_train(c);
  auto schema = data::load_schema(gen.schema.string());
  std::swap(schema.features[0], schema.features[1]);
  data::write_schema(dir.file("swapped.csv"), schema);
  try {
    cmd_export_attention(dir.path() / "run" / "seed_1" / "checkpoint.bin",
                         {gen.data, dir.file("swapped.csv"), std::nullopt}, dir.path() / "att");
    FAIL();
  } catch (const ConfigurationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("num_0"), std::string::npos);
    EXPECT_NE(msg.find("num_1"), std::string::npos);
  }
}

namespace {

json twin_config(const fs::path& out, const fs::path& descriptions) {
  auto j = tiny_config(out);
  j["data"]["synthetic"]["treatments"] = 3;
  j["data"]["synthetic"]["records"] = 150;
  j["data"]["synthetic"]["twin_arms"] = {{"2", 1}};
  j["descriptions"] = descriptions.string();
  return j;
}

}  // namespace

TEST(ZeroShot, PairedTableIsSeedDeterministic) {
  TempDir dir("fedtrans_cli");
  data::write_descriptions(dir.file("desc.csv"), {{0, {1, 0}}, {1, {0, 1}}, {2, {0, 1}}});
  const auto a = cmd_zero_shot(
      experiment_config_from_json(twin_config(dir.path() / "a", dir.file("desc.csv"))), 2);
  const auto b = cmd_zero_shot(
      experiment_config_from_json(twin_config(dir.path() / "b", dir.file("desc.csv"))), 2);
  ASSERT_TRUE(a.failures.empty());
  const auto lines = text::read_lines((dir.path() / "a" / "seed_1" / "zero_shot.csv").string());
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "held_out,supervised,zero_shot,delta");
  EXPECT_EQ(text::split_csv_line(lines[1]).size(), 4u);
  EXPECT_EQ(slurp(a.table), slurp(b.table));
}

TEST(ZeroShot, MissingDescriptionRowIsAConfigurationError) {
  TempDir dir("fedtrans_cli");
  data::write_descriptions(dir.file("desc.csv"), {{0, {1, 0}}, {1, {0, 1}}});
  const auto c = experiment_config_from_json(twin_config(dir.path() / "a", dir.file("desc.csv")));
  const auto s = cmd_zero_shot(c, 2);
  ASSERT_EQ(s.failures.size(), 1u);
  EXPECT_EQ(s.failures[0].exit_code, kExitUsage);
  auto no_desc = twin_config(dir.path() / "b", dir.file("desc.csv"));
  no_desc.erase("descriptions");
  EXPECT_THROW(cmd_zero_shot(experiment_config_from_json(no_desc), 2), ConfigurationError);
}

TEST(ExitCodes, DistinguishConfigurationLoadAndRuntimeFailures) {
  EXPECT_EQ(exit_code_for(ConfigurationError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(LoadError("x")), kExitLoad);
  EXPECT_EQ(exit_code_for(DivergenceError("x")), kExitDivergence);
  EXPECT_EQ(exit_code_for(EmptyInputError("x")), kExitRuntime);
  EXPECT_EQ(mean_std({1.0, 3.0}), "2±1.41421");
  EXPECT_EQ(mean_std({4.0}), "4±0");
}

TEST(Executable, UsageErrorsExitWithUsageCode) {
  TempDir dir("fedtrans_cli");
  const std::string bin = FEDTRANS_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run(""), kExitUsage);
  EXPECT_EQ(run("train --config " + dir.file("nope.json")), kExitUsage);
  std::ofstream(dir.file("bad.json")) << R"({"model": {"heads_self": 3}, "data": {"synthetic": {}}})";
  EXPECT_EQ(run("train --config " + dir.file("bad.json")), kExitUsage);
  std::ofstream(dir.file("c.json")) << tiny_config(dir.path() / "run").dump();
  EXPECT_EQ(run("train --config " + dir.file("c.json") + " --seeds 3"), kExitOk);
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "seed_3" / "checkpoint.bin"));
  EXPECT_EQ(run("export-attention --checkpoint " + dir.file("c.json") + " --data " +
                dir.file("c.json") + " --schema " + dir.file("c.json") + " --out " +
                dir.file("att")),
            kExitLoad);
}
