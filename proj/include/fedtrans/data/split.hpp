#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedtrans/data/record.hpp"

namespace fedtrans::data {

struct DataSplit {
  std::vector<DataRecord> train;
  std::vector<DataRecord> val;
  std::vector<DataRecord> test;
};

/// Seeded shuffle, then floor(0.70 n) train, floor(0.15 n) val, remainder test.
/// Throws EmptyInputError for fewer than 3 records.
DataSplit split_dataset(const std::vector<DataRecord>& records, std::uint64_t seed);

struct PartitionOptions {
  /// Floor on every site's record count after the heterogeneous draw.
  std::size_t min_site_records = 3;
};

/// Splits records across `sites` clients.
///
/// heterogeneity 0 deals a seeded shuffle round-robin. For heterogeneity in (0, 1], each
/// treatment group is divided among sites by proportions drawn from a symmetric Dirichlet
/// with concentration (1 - h) / h (clamped to >= 1e-3), so treated/untreated ratios vary
/// more across sites as h grows. Sites under `min_site_records` then receive records moved
/// from the largest site. Every site keeps records in input order.
std::vector<std::vector<DataRecord>> partition_sites(const std::vector<DataRecord>& records,
                                                     std::size_t sites, double heterogeneity,
                                                     std::uint64_t seed,
                                                     PartitionOptions options = {});

}  // namespace fedtrans::data
