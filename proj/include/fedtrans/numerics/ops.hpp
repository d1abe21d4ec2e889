#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedtrans/numerics/tape.hpp"
#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::numerics {

inline constexpr double kLayerNormEps = 1e-5;

// Value-level kernels. The tape ops below are built on these.

/// out[i,j] = sum_k input[i,k] * weight[k,j] + bias[j]
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Normalizes every last-axis slice with population variance, then applies gain and shift.
Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift,
                  double eps = kLayerNormEps);

/// Row-wise softmax over the last axis, computed with max subtraction.
Tensor softmax_rows(const Tensor& scores);

double mse_loss(const Tensor& pred, const Tensor& target);

// Differentiable ops recorded on the inputs' tape.

Var matmul(Var a, Var b);
Var linear(Var input, Var weight, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var sum(Var a);
Var relu(Var a);
Var reshape(Var a, Shape shape);
Var layer_norm(Var input, Var gain, Var shift, double eps = kLayerNormEps);
Var mse_loss(Var pred, Var target);

/// One pooled lookup: scale * mean(table[ids]). An empty id list yields a zero row.
struct EmbeddingBag {
  std::vector<std::size_t> ids;
  double scale = 1.0;
};

/// Rows of `table` [vocab x d] pooled per bag, giving [bags x d].
Var embedding_bag(Var table, std::span<const EmbeddingBag> bags);

}  // namespace fedtrans::numerics
