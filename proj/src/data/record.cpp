#include "fedtrans/data/record.hpp"

#include <set>

namespace fedtrans::data {

std::vector<std::size_t> SiteDataset::local_treatments() const {
  std::set<std::size_t> seen;
  for (const auto* split : {&train, &val, &test}) {
    for (const auto& r : *split) seen.insert(r.treatment);
  }
  return {seen.begin(), seen.end()};
}

}  // namespace fedtrans::data
