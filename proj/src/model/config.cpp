#include "fedtrans/model/config.hpp"

#include <string>

#include "fedtrans/errors.hpp"

namespace fedtrans::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigurationError("model config: " + msg); };
  if (embedding_width == 0) fail("embedding_width must be positive");
  if (heads_self == 0 || embedding_width % heads_self != 0) {
    fail("embedding_width " + std::to_string(embedding_width) +
         " is not divisible by heads_self " + std::to_string(heads_self));
  }
  if (heads_cross == 0 || embedding_width % heads_cross != 0) {
    fail("embedding_width " + std::to_string(embedding_width) +
         " is not divisible by heads_cross " + std::to_string(heads_cross));
  }
  if (encoder_layers == 0) fail("encoder_layers must be at least 1");
  if (cross_layers == 0) fail("cross_layers must be at least 1");
  if (predictor_hidden == 0) fail("predictor_hidden must be positive");
  if (ffn_hidden == 0) fail("ffn_hidden must be positive");
  if (treatments < 2) fail("at least 2 treatments are required");
  if (description_dim && *description_dim == 0) fail("description_dim must be positive");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j{{"embedding_width", c.embedding_width},
                   {"encoder_layers", c.encoder_layers},
                   {"heads_self", c.heads_self},
                   {"heads_cross", c.heads_cross},
                   {"cross_layers", c.cross_layers},
                   {"predictor_hidden", c.predictor_hidden},
                   {"ffn_hidden", c.ffn_hidden},
                   {"treatments", c.treatments},
                   {"layer_norm_eps", c.layer_norm_eps}};
  j["description_dim"] = c.description_dim ? nlohmann::json(*c.description_dim) : nullptr;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigurationError("model config must be an object");
  ModelConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "embedding_width") c.embedding_width = value.get<std::size_t>();
      else if (key == "encoder_layers") c.encoder_layers = value.get<std::size_t>();
      else if (key == "heads_self") c.heads_self = value.get<std::size_t>();
      else if (key == "heads_cross") c.heads_cross = value.get<std::size_t>();
      else if (key == "cross_layers") c.cross_layers = value.get<std::size_t>();
      else if (key == "predictor_hidden") c.predictor_hidden = value.get<std::size_t>();
      else if (key == "ffn_hidden") c.ffn_hidden = value.get<std::size_t>();
      else if (key == "treatments") c.treatments = value.get<std::size_t>();
      else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
      else if (key == "description_dim") {
        if (value.is_null()) c.description_dim.reset();
        else c.description_dim = value.get<std::size_t>();
      } else {
        throw ConfigurationError("model config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace fedtrans::model
