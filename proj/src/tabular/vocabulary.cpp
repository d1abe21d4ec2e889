#include "fedtrans/tabular/vocabulary.hpp"

#include <cctype>

#include "fedtrans/errors.hpp"

namespace fedtrans::tabular {

namespace {
constexpr const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]"};

bool is_separator(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (is_separator(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const char* token : kReserved) add(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 3 || tokens[kPad] != kReserved[0] || tokens[kUnk] != kReserved[1] ||
      tokens[kCls] != kReserved[2]) {
    throw LoadError("vocabulary token list does not start with [PAD], [UNK], [CLS]");
  }
  Vocabulary vocab;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw LoadError("duplicate vocabulary token " + tokens[i]);
    vocab.add(tokens[i]);
  }
  return vocab;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::string> feature_tokens(const FeatureSpec& feature, const CovariateValue& value) {
  std::vector<std::string> tokens = tokenize(feature.name);
  if (feature.kind == FeatureKind::categorical) {
    if (const auto* s = std::get_if<std::string>(&value)) {
      for (auto& t : tokenize(*s)) tokens.push_back(std::move(t));
    }
  }
  return tokens;
}

void extend_vocabulary(Vocabulary& vocab, const DatasetSchema& schema,
                       std::span<const data::DataRecord> records) {
  for (const auto& f : schema.features) {
    for (const auto& t : tokenize(f.name)) vocab.add(t);
  }
  for (const auto& record : records) {
    for (const auto& f : schema.features) {
      if (f.kind != FeatureKind::categorical) continue;
      auto it = record.covariates.find(f.name);
      if (it == record.covariates.end()) continue;
      for (const auto& t : feature_tokens(f, it->second)) vocab.add(t);
    }
  }
}

Vocabulary build_vocabulary(const DatasetSchema& schema, std::span<const data::DataRecord> records) {
  if (records.empty()) throw EmptyInputError("cannot build a vocabulary from an empty dataset");
  Vocabulary vocab;
  extend_vocabulary(vocab, schema, records);
  return vocab;
}

}  // namespace fedtrans::tabular
