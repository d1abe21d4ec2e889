#include "fedtrans/data/split.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "fedtrans/errors.hpp"
#include "fedtrans/numerics/rng.hpp"

namespace fedtrans::data {

namespace {

std::vector<DataRecord> gather(const std::vector<DataRecord>& records,
                               std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  std::vector<DataRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records[i]);
  return out;
}

// Largest-remainder rounding of `total * weights` to integers summing to `total`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(exact);
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++counts[remainders[k % remainders.size()].second];
  }
  return counts;
}

}  // namespace

DataSplit split_dataset(const std::vector<DataRecord>& records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 3) throw EmptyInputError("split_dataset needs at least 3 records, got " +
                                   std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  numerics::Rng rng(numerics::derive_seed(seed, {0x5011}));
  rng.shuffle(order);

  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_val = n * 15 / 100;
  DataSplit split;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = records[order[k]];
    if (k < n_train) {
      split.train.push_back(r);
    } else if (k < n_train + n_val) {
      split.val.push_back(r);
    } else {
      split.test.push_back(r);
    }
  }
  return split;
}

std::vector<std::vector<DataRecord>> partition_sites(const std::vector<DataRecord>& records,
                                                     std::size_t sites, double heterogeneity,
                                                     std::uint64_t seed,
                                                     PartitionOptions options) {
  const std::size_t n = records.size();
  if (sites == 0) throw ConfigurationError("partition_sites needs at least one site");
  if (sites > n) {
    throw ConfigurationError("cannot partition " + std::to_string(n) + " records into " +
                             std::to_string(sites) + " sites");
  }
  if (!(heterogeneity >= 0.0 && heterogeneity <= 1.0)) {
    throw ConfigurationError("heterogeneity must lie in [0, 1]");
  }
  if (sites == 1) return {records};

  numerics::Rng rng(numerics::derive_seed(seed, {0x9A27}));
  std::vector<std::vector<std::size_t>> assignment(sites);

  if (heterogeneity == 0.0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t k = 0; k < n; ++k) assignment[k % sites].push_back(order[k]);
  } else {
    const double concentration = std::max(1e-3, (1.0 - heterogeneity) / heterogeneity);
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[records[i].treatment].push_back(i);
    for (auto& [treatment, members] : groups) {
      rng.shuffle(members);
      const auto counts = apportion(members.size(), rng.dirichlet(sites, concentration));
      std::size_t offset = 0;
      for (std::size_t s = 0; s < sites; ++s) {
        for (std::size_t k = 0; k < counts[s]; ++k) assignment[s].push_back(members[offset++]);
      }
    }
    const std::size_t floor_size = std::min(options.min_site_records, n / sites);
    for (std::size_t s = 0; s < sites; ++s) {
      while (assignment[s].size() < floor_size) {
        auto largest = std::max_element(
            assignment.begin(), assignment.end(),
            [](const auto& a, const auto& b) { return a.size() < b.size(); });
        const std::size_t pick = rng.index(largest->size());
        assignment[s].push_back((*largest)[pick]);
        largest->erase(largest->begin() + static_cast<std::ptrdiff_t>(pick));
      }
    }
  }

  std::vector<std::vector<DataRecord>> out;
  out.reserve(sites);
  for (auto& idx : assignment) out.push_back(gather(records, std::move(idx)));
  return out;
}

}  // namespace fedtrans::data
