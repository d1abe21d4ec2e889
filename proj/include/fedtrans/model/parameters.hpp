#pragma once

#include <cstddef>
#include <string>

#include "fedtrans/model/config.hpp"
#include "fedtrans/numerics/rng.hpp"
#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::model {

using numerics::ParameterSet;
using numerics::Tensor;

/// Token embedder, covariate encoder, treatment encoder and cross-attention. Path prefixes
/// are `covariate.`, `treatment.` and `cross.`; this is the set the server aggregates.
struct SharedParameters {
  ParameterSet values;

  const Tensor& at(const std::string& path) const;
  bool operator==(const SharedParameters&) const = default;
};

/// The site-local predictor f_m, paths `predictor.{w1,b1,w2,b2}`. Never leaves its site.
struct PredictorHead {
  ParameterSet values;

  const Tensor& at(const std::string& path) const;
  bool operator==(const PredictorHead&) const = default;
};

inline constexpr double kProjectionInitStd = 0.02;

/// Embedding table and attention projections ~ N(0, 0.02), MLP weights He-normal,
/// biases and LayerNorm shifts zero, LayerNorm gains one. The [PAD] row stays zero.
SharedParameters init_shared(const ModelConfig& config, std::size_t vocab_size,
                             numerics::Rng& rng);
PredictorHead init_head(const ModelConfig& config, numerics::Rng& rng);

/// Path helpers shared by the forward pass and the tests.
std::string covariate_layer_prefix(std::size_t layer);
std::string cross_layer_prefix(std::size_t layer);

/// Throws ContractError when `shared` does not have exactly the layout `config` implies.
void check_layout(const SharedParameters& shared, const ModelConfig& config,
                  std::size_t vocab_size);
void check_layout(const PredictorHead& head, const ModelConfig& config);

}  // namespace fedtrans::model
