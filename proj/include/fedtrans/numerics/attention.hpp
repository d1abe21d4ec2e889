#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedtrans/numerics/tape.hpp"
#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::numerics {

/// How flattened query/key rows group into independent sequences.
/// Queries are [batch*queries x d], keys and values [batch*keys x d].
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t queries = 1;
  std::size_t keys = 1;
  std::size_t heads = 1;
};

/// Visibility mask, flat [batch x queries x keys]; nonzero means the query may attend.
/// An empty mask means every key is visible.
using AttentionMask = std::vector<std::uint8_t>;

/// Broadcasts a per-sequence key padding mask [batch x keys] over the query axis.
AttentionMask key_padding_mask(std::span<const std::uint8_t> key_valid, std::size_t batch,
                               std::size_t queries, std::size_t keys);

struct AttentionOutput {
  Var output;
  /// Softmax weights [batch x heads x queries x keys]; masked entries are exactly 0.
  Tensor weights;
};

/// Per head h: softmax(Q_h K_h^T / sqrt(d/heads)) V_h, heads concatenated back to width d.
/// Throws ConfigurationError when d is not divisible by heads and ContractError when a
/// query row has no visible key.
AttentionOutput scaled_dot_product_attention(Var query, Var key, Var value,
                                             const AttentionLayout& layout,
                                             std::span<const std::uint8_t> mask = {});

template <typename T>
struct AttentionProjections {
  T wq, bq, wk, bk, wv, bv, wo, bo;
};

using AttentionParams = AttentionProjections<Tensor>;
using AttentionVars = AttentionProjections<Var>;

/// Projected multi-head attention: concat_h(A_h V_h) W_out + b_out.
AttentionOutput multi_head_attention(Var query, Var key, Var value, const AttentionVars& params,
                                     const AttentionLayout& layout,
                                     std::span<const std::uint8_t> mask = {});

struct AttentionResult {
  Tensor output;     // [n_q x d]
  Tensor attention;  // [heads x n_q x n_k]
};

/// Value-level single-sequence form. `mask`, when given, is [n_q x n_k].
AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     std::size_t heads, const AttentionParams& params,
                                     const std::optional<std::vector<std::vector<bool>>>& mask =
                                         std::nullopt);

}  // namespace fedtrans::numerics
