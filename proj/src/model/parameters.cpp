#include "fedtrans/model/parameters.hpp"

#include <cmath>

#include "fedtrans/errors.hpp"
#include "fedtrans/tabular/encoding.hpp"
#include "fedtrans/tabular/vocabulary.hpp"

namespace fedtrans::model {

namespace {

const Tensor& find(const ParameterSet& set, const std::string& path, const char* owner) {
  auto it = set.find(path);
  if (it == set.end()) throw ContractError(std::string(owner) + " has no parameter " + path);
  return it->second;
}

Tensor gaussian(numerics::Shape shape, double stddev, numerics::Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.normal(0.0, stddev);
  return t;
}

Tensor he_normal(std::size_t fan_in, std::size_t fan_out, numerics::Rng& rng) {
  return gaussian({fan_in, fan_out}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

void add_mlp(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden,
             std::size_t out, numerics::Rng& rng) {
  set[prefix + "w1"] = he_normal(in, hidden, rng);
  set[prefix + "b1"] = Tensor({hidden});
  set[prefix + "w2"] = he_normal(hidden, out, rng);
  set[prefix + "b2"] = Tensor({out});
}

void add_layer_norm(ParameterSet& set, const std::string& prefix, std::size_t d) {
  set[prefix + "gain"] = Tensor({d}, 1.0);
  set[prefix + "shift"] = Tensor({d});
}

void add_attention(ParameterSet& set, const std::string& prefix, std::size_t d,
                   numerics::Rng& rng) {
  for (const char* name : {"q", "k", "v", "o"}) {
    set[prefix + "w" + name] = gaussian({d, d}, kProjectionInitStd, rng);
    set[prefix + "b" + name] = Tensor({d});
  }
}

void add_block(ParameterSet& set, const std::string& prefix, const ModelConfig& c,
               numerics::Rng& rng) {
  add_attention(set, prefix + "attn.", c.embedding_width, rng);
  add_layer_norm(set, prefix + "ln1.", c.embedding_width);
  add_mlp(set, prefix + "mlp.", c.embedding_width, c.ffn_hidden, c.embedding_width, rng);
  add_layer_norm(set, prefix + "ln2.", c.embedding_width);
}

// Shapes only; values are irrelevant for the layout comparison.
ParameterSet expected_shared_layout(const ModelConfig& c, std::size_t vocab_size) {
  numerics::Rng rng(0);
  return init_shared(c, vocab_size, rng).values;
}

void compare_layout(const ParameterSet& actual, const ParameterSet& expected, const char* owner) {
  for (const auto& [path, tensor] : expected) {
    auto it = actual.find(path);
    if (it == actual.end()) throw ContractError(std::string(owner) + " is missing " + path);
    if (it->second.shape() != tensor.shape()) {
      throw ContractError(std::string(owner) + " parameter " + path + " has shape " +
                          numerics::shape_to_string(it->second.shape()) + ", expected " +
                          numerics::shape_to_string(tensor.shape()));
    }
  }
  for (const auto& [path, tensor] : actual) {
    if (!expected.contains(path)) {
      throw ContractError(std::string(owner) + " has unexpected parameter " + path);
    }
  }
}

}  // namespace

const Tensor& SharedParameters::at(const std::string& path) const {
  return find(values, path, "shared parameters");
}

const Tensor& PredictorHead::at(const std::string& path) const {
  return find(values, path, "predictor head");
}

std::string covariate_layer_prefix(std::size_t layer) {
  return "covariate.layer" + std::to_string(layer) + ".";
}

std::string cross_layer_prefix(std::size_t layer) {
  return "cross.layer" + std::to_string(layer) + ".";
}

SharedParameters init_shared(const ModelConfig& config, std::size_t vocab_size,
                             numerics::Rng& rng) {
  config.validate();
  if (vocab_size < 3) throw ConfigurationError("vocabulary must hold the reserved tokens");
  const std::size_t d = config.embedding_width;
  SharedParameters shared;
  auto& set = shared.values;

  numerics::Rng embed_rng = rng.split({1});
  set["covariate.embedding"] =
      tabular::Embedder::initialize(vocab_size, d, embed_rng).table;

  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    numerics::Rng layer_rng = rng.split({2, l});
    add_block(set, covariate_layer_prefix(l), config, layer_rng);
  }

  numerics::Rng treat_rng = rng.split({3});
  if (config.description_dim) {
    set["treatment.project.w"] =
        gaussian({*config.description_dim, config.treatments}, kProjectionInitStd, treat_rng);
    set["treatment.project.b"] = Tensor({config.treatments});
  }
  add_mlp(set, "treatment.mlp.", config.treatments, d, d, treat_rng);

  for (std::size_t l = 0; l < config.cross_layers; ++l) {
    numerics::Rng layer_rng = rng.split({4, l});
    add_block(set, cross_layer_prefix(l), config, layer_rng);
  }
  return shared;
}

PredictorHead init_head(const ModelConfig& config, numerics::Rng& rng) {
  config.validate();
  PredictorHead head;
  numerics::Rng head_rng = rng.split({5});
  add_mlp(head.values, "predictor.", config.embedding_width, config.predictor_hidden, 1,
          head_rng);
  return head;
}

void check_layout(const SharedParameters& shared, const ModelConfig& config,
                  std::size_t vocab_size) {
  compare_layout(shared.values, expected_shared_layout(config, vocab_size), "shared parameters");
}

void check_layout(const PredictorHead& head, const ModelConfig& config) {
  numerics::Rng rng(0);
  compare_layout(head.values, init_head(config, rng).values, "predictor head");
}

}  // namespace fedtrans::model
