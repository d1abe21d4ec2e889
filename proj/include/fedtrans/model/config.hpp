#pragma once

#include <cstddef>
#include <optional>

#include <json.hpp>

namespace fedtrans::model {

/// Architecture hyperparameters. Defaults follow the reference setup; tests shrink the widths.
struct ModelConfig {
  std::size_t embedding_width = 256;
  std::size_t encoder_layers = 2;
  std::size_t heads_self = 8;
  std::size_t heads_cross = 8;
  std::size_t cross_layers = 1;
  std::size_t predictor_hidden = 256;
  /// Hidden width of the MLP inside every transformer block.
  std::size_t ffn_hidden = 256;
  std::size_t treatments = 2;
  /// Width of precomputed treatment-description vectors. When set, every treatment is
  /// encoded from its description instead of its one-hot code.
  std::optional<std::size_t> description_dim;
  double layer_norm_eps = 1e-5;

  /// Throws ConfigurationError on an inconsistent configuration.
  void validate() const;

  /// Input width of the treatment MLP: K for one-hot codes, and also the projection
  /// target of description vectors.
  std::size_t treatment_input_width() const {
    return description_dim ? *description_dim : treatments;
  }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace fedtrans::model
