#include "fedtrans/numerics/rng.hpp"

#include "fedtrans/errors.hpp"

namespace fedtrans::numerics {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t key : path) h = mix64(h ^ mix64(key + 0x632BE59BD9B4E019ULL));
  return h;
}

std::vector<double> Rng::dirichlet(std::size_t k, double concentration) {
  if (!(concentration > 0.0)) throw ContractError("dirichlet concentration must be positive");
  std::vector<double> draw(k);
  double total = 0.0;
  for (auto& x : draw) {
    x = gamma(concentration);
    total += x;
  }
  if (total <= 0.0) {
    // Every gamma draw underflowed; fall back to a point mass.
    draw.assign(k, 0.0);
    draw[index(k)] = 1.0;
    return draw;
  }
  for (auto& x : draw) x /= total;
  return draw;
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ContractError("categorical draw needs positive total weight");
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace fedtrans::numerics
