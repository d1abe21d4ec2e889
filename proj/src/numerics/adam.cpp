#include "fedtrans/numerics/adam.hpp"

#include <cmath>

#include "fedtrans/errors.hpp"

namespace fedtrans::numerics {

AdamState make_adam_state(const ParameterSet& params, AdamHyperparameters hyper) {
  AdamState state;
  state.hyper = hyper;
  for (const auto& [path, value] : params) {
    state.first_moment.emplace(path, Tensor(value.shape(), 0.0));
    state.second_moment.emplace(path, Tensor(value.shape(), 0.0));
  }
  return state;
}

namespace {

const Tensor& lookup(const ParameterSet& set, const std::string& path, const char* what) {
  auto it = set.find(path);
  if (it == set.end()) throw DimensionError(std::string(what) + " has no entry for " + path);
  return it->second;
}

}  // namespace

AdamUpdate adam_step(const ParameterSet& params, const ParameterSet& grads,
                     const AdamState& state) {
  const auto& hp = state.hyper;
  AdamUpdate result{params, state};
  result.state.step = state.step + 1;
  const double t = static_cast<double>(result.state.step);
  const double correction1 = 1.0 - std::pow(hp.beta1, t);
  const double correction2 = 1.0 - std::pow(hp.beta2, t);

  for (auto& [path, value] : result.params) {
    const Tensor& g = lookup(grads, path, "gradient map");
    lookup(state.first_moment, path, "adam first moment");
    lookup(state.second_moment, path, "adam second moment");
    Tensor& m = result.state.first_moment.at(path);
    Tensor& v = result.state.second_moment.at(path);
    require_same_shape(value, g, ("adam gradient for " + path).c_str());
    require_same_shape(value, m, ("adam first moment for " + path).c_str());
    require_same_shape(value, v, ("adam second moment for " + path).c_str());
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
  }
  return result;
}

}  // namespace fedtrans::numerics
