#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/tabular/schema.hpp"

namespace fedtrans::tabular {

/// Lowercases and splits on whitespace, underscores and hyphens.
std::vector<std::string> tokenize(std::string_view text);

/// Token string to dense id. Ids 0..2 are [PAD], [UNK], [CLS].
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;

  Vocabulary();
  /// Rebuilds from a saved token list; the first three entries must be the reserved tokens.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  /// Id of `token`, inserting it if new.
  std::size_t add(const std::string& token);
  /// Id of `token`, or kUnk when absent.
  std::size_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.contains(token); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Tokens a single covariate contributes: name tokens, followed by value tokens when
/// the feature is categorical.
std::vector<std::string> feature_tokens(const FeatureSpec& feature, const CovariateValue& value);

/// Adds every feature-name token and every observed categorical token in first-occurrence order.
void extend_vocabulary(Vocabulary& vocab, const DatasetSchema& schema,
                       std::span<const data::DataRecord> records);

/// Throws EmptyInputError for an empty record set.
Vocabulary build_vocabulary(const DatasetSchema& schema, std::span<const data::DataRecord> records);

}  // namespace fedtrans::tabular
