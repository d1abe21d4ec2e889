#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedtrans/data/record.hpp"

namespace fedtrans::data {

/// Schema sidecar: lines `feature,<name>,<categorical|numerical>`, `treatment,<name>`,
/// `outcome,<name>`. Blank lines and lines starting with '#' are ignored.
DatasetSchema load_schema(const std::string& path);
void write_schema(const std::string& path, const DatasetSchema& schema);

struct LoadedDataset {
  DatasetSchema schema;
  std::vector<DataRecord> records;
};

/// Reads a delimited data file whose header names every schema feature plus the treatment
/// and outcome columns (extra columns are ignored). Record ids are 0-based row indices.
/// When `potential_outcomes_path` is given, its rows (header `mu_0..mu_{K-1}`) are attached
/// to the records in order.
LoadedDataset load_dataset(const std::string& data_path, const std::string& schema_path,
                           std::size_t num_treatments,
                           const std::optional<std::string>& potential_outcomes_path = {});

/// Parses records against an already loaded schema.
std::vector<DataRecord> load_records(const std::string& data_path, const DatasetSchema& schema,
                                     std::size_t num_treatments);

void write_dataset(const std::string& path, const DatasetSchema& schema,
                   const std::vector<DataRecord>& records);

/// Ground truth sidecar, one row per record in `records` order.
void write_potential_outcomes(const std::string& path, const std::vector<DataRecord>& records,
                              std::size_t num_treatments);
void attach_potential_outcomes(const std::string& path, std::vector<DataRecord>& records,
                               std::size_t num_treatments);

/// Treatment-description embeddings: each line `treatment_id` followed by the vector entries.
/// All rows must share one width.
std::map<std::size_t, std::vector<double>> load_descriptions(const std::string& path);
void write_descriptions(const std::string& path,
                        const std::map<std::size_t, std::vector<double>>& descriptions);

}  // namespace fedtrans::data
