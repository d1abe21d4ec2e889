#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/model/network.hpp"

namespace fedtrans::evaluation {

struct AttentionSnapshot {
  std::vector<std::string> labels;     // "[CLS]" then the schema's features, length L
  std::vector<numerics::Tensor> self;  // per encoder layer [heads x L x L]
  /// treatment -> per cross layer [heads x L], averaged over patients assigned that
  /// treatment, or over every patient when nobody in the set received it.
  std::map<std::size_t, std::vector<numerics::Tensor>> cross;
  std::map<std::size_t, std::size_t> patients;  // treatment -> patients averaged
  std::size_t records = 0;
};

/// Mean attention maps of the records under the given model and site pipeline.
AttentionSnapshot attention_snapshot(std::span<const data::DataRecord> records,
                                     const model::SharedParameters& shared,
                                     const model::PredictorHead& head,
                                     const model::InputPipeline& pipeline,
                                     std::size_t chunk = 128);

/// Writes one labeled CSV per (layer, head) self-attention map and per (treatment, head)
/// cross-attention vector. Returns the files written, in order.
std::vector<std::filesystem::path> export_attention(const AttentionSnapshot& snapshot,
                                                    const std::filesystem::path& directory);

}  // namespace fedtrans::evaluation
