#include "fedtrans/tabular/encoding.hpp"

#include <cmath>

#include "fedtrans/errors.hpp"

namespace fedtrans::tabular {

namespace {

void pool_into(const Tensor& table, const EmbeddingBag& bag, double* dst) {
  if (bag.ids.empty()) return;
  const std::size_t d = table.dim(1);
  const double w = bag.scale / static_cast<double>(bag.ids.size());
  for (std::size_t id : bag.ids) {
    if (id >= table.dim(0)) {
      throw DimensionError("token id " + std::to_string(id) + " outside embedding table");
    }
    const double* src = table.raw() + id * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
  }
}

}  // namespace

Embedder Embedder::initialize(std::size_t vocab_size, std::size_t width, numerics::Rng& rng) {
  Embedder e{Tensor({vocab_size, width})};
  for (std::size_t r = 0; r < vocab_size; ++r) {
    if (r == Vocabulary::kPad) continue;
    for (std::size_t j = 0; j < width; ++j) e.table.at(r, j) = rng.normal(0.0, kEmbeddingInitStd);
  }
  return e;
}

Standardizer Standardizer::fit(const DatasetSchema& schema,
                               std::span<const data::DataRecord> records) {
  std::map<std::string, Stats> stats;
  for (const auto& f : schema.features) {
    if (f.kind != FeatureKind::numerical) continue;
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      auto it = r.covariates.find(f.name);
      if (it == r.covariates.end()) continue;
      const auto* v = std::get_if<double>(&it->second);
      if (!v || std::isnan(*v)) continue;
      sum += *v;
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    for (const auto& r : records) {
      auto it = r.covariates.find(f.name);
      if (it == r.covariates.end()) continue;
      const auto* v = std::get_if<double>(&it->second);
      if (!v || std::isnan(*v)) continue;
      sq += (*v - mean) * (*v - mean);
    }
    double sd = std::sqrt(sq / static_cast<double>(n));
    if (!(sd > 1e-12)) sd = 1.0;
    stats.emplace(f.name, Stats{mean, sd});
  }
  return Standardizer(std::move(stats));
}

double Standardizer::apply(const std::string& feature, double value) const {
  auto it = stats_.find(feature);
  if (it == stats_.end()) return value;
  return (value - it->second.mean) / it->second.stddev;
}

EmbeddingBag feature_bag(const FeatureSpec& feature, const CovariateValue& value,
                         const Vocabulary& vocab) {
  EmbeddingBag bag;
  if (feature.kind == FeatureKind::numerical) {
    const auto* v = std::get_if<double>(&value);
    if (!v) {
      throw ContractError("numerical feature '" + feature.name + "' received a string value");
    }
    if (std::isnan(*v)) throw MissingValueError("feature '" + feature.name + "' is NaN");
    bag.scale = *v;
  } else if (!std::holds_alternative<std::string>(value)) {
    throw ContractError("categorical feature '" + feature.name + "' received a numeric value");
  }
  for (const auto& token : feature_tokens(feature, value)) bag.ids.push_back(vocab.id(token));
  if (bag.ids.empty()) bag.ids.push_back(Vocabulary::kUnk);
  return bag;
}

std::vector<EmbeddingBag> record_bags(const data::DataRecord& record, const DatasetSchema& schema,
                                      const Vocabulary& vocab, const Standardizer& standardizer) {
  std::vector<EmbeddingBag> bags;
  bags.reserve(schema.features.size() + 1);
  bags.push_back(EmbeddingBag{{Vocabulary::kCls}, 1.0});
  for (const auto& f : schema.features) {
    auto it = record.covariates.find(f.name);
    if (it == record.covariates.end()) {
      throw MissingValueError("record " + std::to_string(record.id) + " is missing feature '" +
                              f.name + "'");
    }
    if (f.kind == FeatureKind::numerical) {
      const auto* v = std::get_if<double>(&it->second);
      if (v && std::isnan(*v)) {
        throw MissingValueError("record " + std::to_string(record.id) + " has NaN for '" +
                                f.name + "'");
      }
      bags.push_back(feature_bag(f, v ? CovariateValue{standardizer.apply(f.name, *v)}
                                      : it->second,
                                 vocab));
    } else {
      bags.push_back(feature_bag(f, it->second, vocab));
    }
  }
  return bags;
}

Tensor encode_feature(const FeatureSpec& feature, const CovariateValue& value,
                      const Vocabulary& vocab, const Embedder& embedder) {
  Tensor out({embedder.width()});
  pool_into(embedder.table, feature_bag(feature, value, vocab), out.raw());
  return out;
}

TokenEmbeddingSequence encode_record(const data::DataRecord& record, const DatasetSchema& schema,
                                     const Vocabulary& vocab, const Embedder& embedder,
                                     const Standardizer& standardizer) {
  const auto bags = record_bags(record, schema, vocab, standardizer);
  const std::size_t d = embedder.width();
  TokenEmbeddingSequence seq{Tensor({bags.size(), d}), std::vector<std::uint8_t>(bags.size(), 1)};
  for (std::size_t i = 0; i < bags.size(); ++i) {
    pool_into(embedder.table, bags[i], seq.embeddings.raw() + i * d);
  }
  return seq;
}

PaddedBatch pad_batch(std::span<const TokenEmbeddingSequence> sequences) {
  if (sequences.empty()) throw EmptyInputError("pad_batch: empty batch");
  const std::size_t d = sequences.front().embeddings.dim(1);
  std::size_t max_len = 0;
  for (const auto& s : sequences) {
    if (s.embeddings.rank() != 2 || s.embeddings.dim(1) != d) {
      throw DimensionError("pad_batch: sequences disagree on embedding width");
    }
    max_len = std::max(max_len, s.length());
  }
  PaddedBatch batch{Tensor({sequences.size(), max_len, d}),
                    std::vector<std::uint8_t>(sequences.size() * max_len, 0), max_len};
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    const auto& s = sequences[b];
    std::copy(s.embeddings.raw(), s.embeddings.raw() + s.embeddings.size(),
              batch.embeddings.raw() + b * max_len * d);
    for (std::size_t i = 0; i < s.length(); ++i) batch.mask[b * max_len + i] = s.mask[i];
  }
  return batch;
}

}  // namespace fedtrans::tabular
