#include "fedtrans/numerics/attention.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "fedtrans/errors.hpp"
#include "fedtrans/numerics/ops.hpp"

namespace fedtrans::numerics {

AttentionMask key_padding_mask(std::span<const std::uint8_t> key_valid, std::size_t batch,
                               std::size_t queries, std::size_t keys) {
  if (key_valid.size() != batch * keys) {
    throw DimensionError("key padding mask has " + std::to_string(key_valid.size()) +
                         " entries, expected " + std::to_string(batch * keys));
  }
  AttentionMask mask(batch * queries * keys);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < queries; ++i) {
      for (std::size_t j = 0; j < keys; ++j) {
        mask[(b * queries + i) * keys + j] = key_valid[b * keys + j];
      }
    }
  }
  return mask;
}

AttentionOutput scaled_dot_product_attention(Var query, Var key, Var value,
                                             const AttentionLayout& layout,
                                             std::span<const std::uint8_t> mask) {
  const Tensor& qv = query.value();
  const Tensor& kv = key.value();
  const Tensor& vv = value.value();
  const auto [batch, nq, nk, heads] = layout;
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2) {
    throw DimensionError("attention inputs must be rank 2");
  }
  const std::size_t d = qv.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigurationError("attention width " + std::to_string(d) +
                             " is not divisible by head count " + std::to_string(heads));
  }
  if (qv.dim(0) != batch * nq || kv.dim(0) != batch * nk || vv.dim(0) != batch * nk ||
      kv.dim(1) != d || vv.dim(1) != d) {
    throw DimensionError("attention: query " + shape_to_string(qv.shape()) + ", key " +
                         shape_to_string(kv.shape()) + ", value " +
                         shape_to_string(vv.shape()) + " do not match the layout");
  }
  if (nk == 0) throw ContractError("attention over an empty key set");
  if (!mask.empty() && mask.size() != batch * nq * nk) {
    throw DimensionError("attention mask has " + std::to_string(mask.size()) +
                         " entries, expected " + std::to_string(batch * nq * nk));
  }

  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto weights = std::make_shared<Tensor>(Shape{batch, heads, nq, nk});
  Tensor out({batch * nq, d});
  std::vector<double> scores(nk);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        const double* qi = qv.raw() + (b * nq + i) * d + h * dh;
        const std::uint8_t* visible = mask.empty() ? nullptr : mask.data() + (b * nq + i) * nk;
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < nk; ++j) {
          if (visible && !visible[j]) continue;
          const double* kj = kv.raw() + (b * nk + j) * d + h * dh;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          scores[j] = acc * scale;
          mx = std::max(mx, scores[j]);
          any = true;
        }
        if (!any) {
          throw ContractError("attention query " + std::to_string(i) + " of sequence " +
                              std::to_string(b) + " has every key masked");
        }
        double* p = weights->raw() + ((b * heads + h) * nq + i) * nk;
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          if (visible && !visible[j]) {
            p[j] = 0.0;
            continue;
          }
          p[j] = std::exp(scores[j] - mx);
          z += p[j];
        }
        double* oi = out.raw() + (b * nq + i) * d + h * dh;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] /= z;
          if (p[j] == 0.0) continue;
          const double* vj = vv.raw() + (b * nk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }

  const std::size_t iq = query.id(), ik = key.id(), iv = value.id();
  Var output = query.tape().record(
      std::move(out), {query, key, value},
      [=](Tape& t, const Tensor& g) {
        const Tensor& q = t.value(iq);
        const Tensor& k = t.value(ik);
        const Tensor& v = t.value(iv);
        double* dq = t.requires_grad(iq) ? t.grad(iq).raw() : nullptr;
        double* dk = t.requires_grad(ik) ? t.grad(ik).raw() : nullptr;
        double* dv = t.requires_grad(iv) ? t.grad(iv).raw() : nullptr;
        std::vector<double> dp(nk), ds(nk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < nq; ++i) {
              const double* p = weights->raw() + ((b * heads + h) * nq + i) * nk;
              const double* gi = g.raw() + (b * nq + i) * d + h * dh;
              double weighted = 0.0;
              for (std::size_t j = 0; j < nk; ++j) {
                const double* vj = v.raw() + (b * nk + j) * d + h * dh;
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
                dp[j] = acc;
                weighted += p[j] * acc;
                if (dv && p[j] != 0.0) {
                  double* dvj = dv + (b * nk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * gi[c];
                }
              }
              for (std::size_t j = 0; j < nk; ++j) ds[j] = p[j] * (dp[j] - weighted) * scale;
              const double* qi = q.raw() + (b * nq + i) * d + h * dh;
              for (std::size_t j = 0; j < nk; ++j) {
                if (ds[j] == 0.0) continue;
                const double* kj = k.raw() + (b * nk + j) * d + h * dh;
                if (dq) {
                  double* dqi = dq + (b * nq + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
                }
                if (dk) {
                  double* dkj = dk + (b * nk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
                }
              }
            }
          }
        }
      });
  return AttentionOutput{output, *weights};
}

AttentionOutput multi_head_attention(Var query, Var key, Var value, const AttentionVars& params,
                                     const AttentionLayout& layout,
                                     std::span<const std::uint8_t> mask) {
  Var q = linear(query, params.wq, params.bq);
  Var k = linear(key, params.wk, params.bk);
  Var v = linear(value, params.wv, params.bv);
  AttentionOutput attended = scaled_dot_product_attention(q, k, v, layout, mask);
  attended.output = linear(attended.output, params.wo, params.bo);
  return attended;
}

AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     std::size_t heads, const AttentionParams& params,
                                     const std::optional<std::vector<std::vector<bool>>>& mask) {
  if (query.rank() != 2 || key.rank() != 2) {
    throw DimensionError("multi_head_attention expects rank-2 query and key");
  }
  const std::size_t nq = query.dim(0), nk = key.dim(0);
  AttentionMask flat;
  if (mask) {
    if (mask->size() != nq) throw DimensionError("attention mask row count mismatch");
    flat.reserve(nq * nk);
    for (const auto& row : *mask) {
      if (row.size() != nk) throw DimensionError("attention mask column count mismatch");
      for (bool b : row) flat.push_back(b ? 1 : 0);
    }
  }
  Tape tape;
  AttentionVars vars{tape.constant(params.wq), tape.constant(params.bq),
                     tape.constant(params.wk), tape.constant(params.bk),
                     tape.constant(params.wv), tape.constant(params.bv),
                     tape.constant(params.wo), tape.constant(params.bo)};
  AttentionOutput out =
      multi_head_attention(tape.constant(query), tape.constant(key), tape.constant(value), vars,
                           AttentionLayout{1, nq, nk, heads}, flat);
  return AttentionResult{out.output.value(), out.weights.reshaped({heads, nq, nk})};
}

}  // namespace fedtrans::numerics
