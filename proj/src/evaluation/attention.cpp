#include "fedtrans/evaluation/attention.hpp"

#include <fstream>
#include <numeric>

#include "fedtrans/errors.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::evaluation {

using numerics::Tensor;

AttentionSnapshot attention_snapshot(std::span<const data::DataRecord> records,
                                     const model::SharedParameters& shared,
                                     const model::PredictorHead& head,
                                     const model::InputPipeline& pipeline, std::size_t chunk) {
  if (records.empty()) throw EmptyInputError("attention snapshot needs at least one record");
  const auto& config = pipeline.config;
  const std::size_t K = config.treatments;
  const std::size_t L = pipeline.schema.features.size() + 1;
  const std::size_t hs = config.heads_self, hc = config.heads_cross;

  AttentionSnapshot snap;
  snap.records = records.size();
  snap.labels.push_back("[CLS]");
  for (const auto& name : pipeline.schema.feature_names()) snap.labels.push_back(name);
  snap.self.assign(config.encoder_layers, Tensor({hs, L, L}));

  // Cross sums kept both over every patient and over each treatment's own patients.
  std::vector<std::vector<Tensor>> all(K, std::vector<Tensor>(config.cross_layers, Tensor({hc, L})));
  auto own = all;
  std::vector<std::size_t> counts(K, 0);
  std::vector<std::size_t> arms(K);
  std::iota(arms.begin(), arms.end(), 0);

  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const auto part = records.subspan(start, std::min(chunk, records.size() - start));
    const auto mb = pipeline.arms_batch(part, arms);
    numerics::Tape tape;
    model::BoundParameters sp(tape, shared.values, false), hp(tape, head.values, false);
    const auto pass = model::forward_batch(mb, sp, hp, config);
    const std::size_t b = part.size();
    for (std::size_t l = 0; l < config.encoder_layers; ++l) {
      const Tensor& maps = pass.attention.self_attention[l];  // [b x h x L x L]
      auto& acc = snap.self[l];
      for (std::size_t r = 0; r < b; ++r) {
        const double* src = maps.raw() + r * hs * L * L;
        for (std::size_t k = 0; k < hs * L * L; ++k) acc[k] += src[k];
      }
    }
    for (std::size_t r = 0; r < b; ++r) {
      const std::size_t assigned = part[r].treatment;
      if (assigned < K) ++counts[assigned];
      for (std::size_t l = 0; l < config.cross_layers; ++l) {
        const Tensor& maps = pass.attention.cross_attention[l];  // [b x h x K x L]
        for (std::size_t j = 0; j < K; ++j) {
          for (std::size_t h = 0; h < hc; ++h) {
            const double* src = maps.raw() + ((r * hc + h) * K + j) * L;
            for (std::size_t k = 0; k < L; ++k) {
              all[j][l][h * L + k] += src[k];
              if (assigned == j) own[j][l][h * L + k] += src[k];
            }
          }
        }
      }
    }
  }

  const double n = static_cast<double>(records.size());
  for (auto& t : snap.self) {
    for (auto& x : t.data()) x /= n;
  }
  for (std::size_t j = 0; j < K; ++j) {
    const bool grouped = counts[j] > 0;
    auto maps = grouped ? own[j] : all[j];
    const double denom = grouped ? static_cast<double>(counts[j]) : n;
    for (auto& t : maps) {
      for (auto& x : t.data()) x /= denom;
    }
    snap.cross[j] = std::move(maps);
    snap.patients[j] = grouped ? counts[j] : records.size();
  }
  return snap;
}

namespace {

std::string header_line(const std::vector<std::string>& labels) {
  std::string line = "position";
  for (const auto& l : labels) line += "," + text::csv_escape(l);
  return line;
}

void write_rows(const std::filesystem::path& path, const std::vector<std::string>& labels,
                const std::vector<std::string>& row_labels, const double* values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header_line(labels) << '\n';
  const std::size_t L = labels.size();
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    out << text::csv_escape(row_labels[r]);
    for (std::size_t c = 0; c < L; ++c) out << ',' << text::format_double(values[r * L + c]);
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> export_attention(const AttentionSnapshot& snapshot,
                                                    const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> written;
  const std::size_t L = snapshot.labels.size();
  for (std::size_t l = 0; l < snapshot.self.size(); ++l) {
    const auto& maps = snapshot.self[l];
    for (std::size_t h = 0; h < maps.dim(0); ++h) {
      auto path = directory / ("self_attention_layer" + std::to_string(l) + "_head" +
                               std::to_string(h) + ".csv");
      write_rows(path, snapshot.labels, snapshot.labels, maps.raw() + h * L * L);
      written.push_back(std::move(path));
    }
  }
  for (const auto& [j, layers] : snapshot.cross) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string layer = layers.size() > 1 ? "layer" + std::to_string(l) + "_" : "";
      for (std::size_t h = 0; h < layers[l].dim(0); ++h) {
        auto path = directory / ("cross_attention_" + layer + "treatment" + std::to_string(j) +
                                 "_head" + std::to_string(h) + ".csv");
        write_rows(path, snapshot.labels, {"treatment" + std::to_string(j)},
                   layers[l].raw() + h * L);
        written.push_back(std::move(path));
      }
    }
  }
  return written;
}

}  // namespace fedtrans::evaluation
