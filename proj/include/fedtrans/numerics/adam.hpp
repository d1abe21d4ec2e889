#pragma once

#include <cstdint>

#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::numerics {

struct AdamHyperparameters {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::uint64_t step = 0;
  AdamHyperparameters hyper;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(const ParameterSet& params, AdamHyperparameters hyper = {});

struct AdamUpdate {
  ParameterSet params;
  AdamState state;
};

/// One bias-corrected Adam update. Pure: identical inputs give bit-identical outputs.
/// Every path in `params` must be present in `grads` and the state with equal shape.
AdamUpdate adam_step(const ParameterSet& params, const ParameterSet& grads,
                     const AdamState& state);

}  // namespace fedtrans::numerics
