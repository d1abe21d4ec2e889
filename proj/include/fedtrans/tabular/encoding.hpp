#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/numerics/ops.hpp"
#include "fedtrans/numerics/rng.hpp"
#include "fedtrans/numerics/tensor.hpp"
#include "fedtrans/tabular/schema.hpp"
#include "fedtrans/tabular/vocabulary.hpp"

namespace fedtrans::tabular {

using numerics::EmbeddingBag;
using numerics::Tensor;

inline constexpr std::size_t kDefaultEmbeddingWidth = 256;
inline constexpr double kEmbeddingInitStd = 0.02;

/// Learnable lookup table, one row per vocabulary token.
struct Embedder {
  Tensor table;  // [vocab_size x width]

  std::size_t width() const { return table.dim(1); }
  std::size_t vocab_size() const { return table.dim(0); }

  /// Gaussian(0, 0.02) rows; the [PAD] row starts and stays at zero.
  static Embedder initialize(std::size_t vocab_size, std::size_t width, numerics::Rng& rng);
};

/// Per-feature mean / standard deviation used to standardize numerical covariates.
class Standardizer {
 public:
  struct Stats {
    double mean = 0.0;
    double stddev = 1.0;
  };

  Standardizer() = default;
  explicit Standardizer(std::map<std::string, Stats> stats) : stats_(std::move(stats)) {}

  /// Population statistics of each numerical feature over `records`. A zero spread maps to 1.
  static Standardizer fit(const DatasetSchema& schema, std::span<const data::DataRecord> records);

  /// Standardized value; features without statistics pass through unchanged.
  double apply(const std::string& feature, double value) const;
  const std::map<std::string, Stats>& stats() const { return stats_; }

 private:
  std::map<std::string, Stats> stats_;
};

/// The pooled lookup h_i realizes for one covariate. `value` for numerical features
/// must already be standardized.
EmbeddingBag feature_bag(const FeatureSpec& feature, const CovariateValue& value,
                         const Vocabulary& vocab);

/// [CLS] followed by one bag per schema feature, in schema order.
std::vector<EmbeddingBag> record_bags(const data::DataRecord& record, const DatasetSchema& schema,
                                      const Vocabulary& vocab, const Standardizer& standardizer);

/// h_i(x_i) as a d-vector. Categorical: mean of the name and value token embeddings.
/// Numerical: mean of the name token embeddings times the value.
Tensor encode_feature(const FeatureSpec& feature, const CovariateValue& value,
                      const Vocabulary& vocab, const Embedder& embedder);

/// e(x) materialized: row 0 is [CLS], rows 1..d_m the features.
struct TokenEmbeddingSequence {
  Tensor embeddings;               // [(features + 1) x d]
  std::vector<std::uint8_t> mask;  // 1 = real position

  std::size_t length() const { return mask.size(); }
};

TokenEmbeddingSequence encode_record(const data::DataRecord& record, const DatasetSchema& schema,
                                     const Vocabulary& vocab, const Embedder& embedder,
                                     const Standardizer& standardizer = {});

struct PaddedBatch {
  Tensor embeddings;               // [batch x max_length x d]
  std::vector<std::uint8_t> mask;  // [batch x max_length]
  std::size_t max_length = 0;
};

/// Zero-pads every sequence to the longest one.
PaddedBatch pad_batch(std::span<const TokenEmbeddingSequence> sequences);

}  // namespace fedtrans::tabular
