#include "fedtrans/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "fedtrans/errors.hpp"

namespace fedtrans::numerics {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

// c[n x q] += a[n x p] * b[p x q]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t p,
             std::size_t q) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * q;
    const double* ai = a + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + k * q;
      for (std::size_t j = 0; j < q; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[n x p] += a[n x q] * b[p x q]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t q,
             std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * q;
    double* ci = c + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const double* bk = b + k * q;
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) acc += ai[j] * bk[j];
      ci[k] += acc;
    }
  }
}

// c[p x q] += a[n x p]^T * b[n x q]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t p,
             std::size_t q) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * p;
    const double* bi = b + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ck = c + k * q;
      for (std::size_t j = 0; j < q; ++j) ck[j] += aik * bi[j];
    }
  }
}

void check_linear_shapes(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  if (input.dim(1) != weight.dim(0) || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_to_string(input.shape()) + " and weight " +
                         shape_to_string(weight.shape()) + " with bias " +
                         shape_to_string(bias.shape()) + " do not conform");
  }
}

std::size_t last_dim(const Tensor& t, const char* what) {
  if (t.rank() == 0) throw DimensionError(std::string(what) + ": rank-0 tensor");
  return t.shape().back();
}

}  // namespace

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_linear_shapes(input, weight, bias);
  const std::size_t n = input.dim(0), p = input.dim(1), q = weight.dim(1);
  Tensor out({n, q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(bias.raw(), bias.raw() + q, out.raw() + i * q);
  }
  gemm_nn(input.raw(), weight.raw(), out.raw(), n, p, q);
  return out;
}

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift, double eps) {
  const std::size_t d = last_dim(input, "layer_norm");
  if (d == 0) throw EmptyInputError("layer_norm: empty normalization axis");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  if (gain.size() != d || shift.size() != d) {
    throw DimensionError("layer_norm: input " + shape_to_string(input.shape()) + " vs gain " +
                         shape_to_string(gain.shape()) + " / shift " +
                         shape_to_string(shift.shape()));
  }
  Tensor out(input.shape());
  const std::size_t rows = input.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.raw() + r * d;
    double* y = out.raw() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * inv * gain[j] + shift[j];
  }
  return out;
}

Tensor softmax_rows(const Tensor& scores) {
  const std::size_t m = last_dim(scores, "softmax_rows");
  if (m == 0) throw EmptyInputError("softmax_rows: empty row");
  Tensor out(scores.shape());
  const std::size_t rows = scores.size() / m;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = scores.raw() + r * m;
    double* p = out.raw() + r * m;
    const double mx = *std::max_element(s, s + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      p[j] = std::exp(s[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < m; ++j) p[j] /= z;
  }
  return out;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) {
    throw DimensionError("mse_loss: prediction " + shape_to_string(pred.shape()) +
                         " vs target " + shape_to_string(target.shape()));
  }
  if (pred.size() == 0) throw EmptyInputError("mse_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    acc += r * r;
  }
  return acc / static_cast<double>(pred.size());
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul lhs");
  require_rank(bv, 2, "matmul rhs");
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: " + shape_to_string(av.shape()) + " x " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out({n, q});
  gemm_nn(av.raw(), bv.raw(), out.raw(), n, p, q);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, n, p, q](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) gemm_nt(g.raw(), t.value(ib).raw(), t.grad(ia).raw(), n, q, p);
    if (t.requires_grad(ib)) gemm_tn(t.value(ia).raw(), g.raw(), t.grad(ib).raw(), n, p, q);
  });
}

Var linear(Var input, Var weight, Var bias) {
  Tensor out = linear_forward(input.value(), weight.value(), bias.value());
  const std::size_t n = input.value().dim(0), p = input.value().dim(1),
                    q = weight.value().dim(1);
  const std::size_t ix = input.id(), iw = weight.id(), ib = bias.id();
  return input.tape().record(
      std::move(out), {input, weight, bias}, [=](Tape& t, const Tensor& g) {
        if (t.requires_grad(ix)) gemm_nt(g.raw(), t.value(iw).raw(), t.grad(ix).raw(), n, q, p);
        if (t.requires_grad(iw)) gemm_tn(t.value(ix).raw(), g.raw(), t.grad(iw).raw(), n, p, q);
        if (t.requires_grad(ib)) {
          double* gb = t.grad(ib).raw();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < q; ++j) gb[j] += g[i * q + j];
          }
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& dst = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& dst = t.grad(ia);
      const Tensor& other = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& dst = t.grad(ib);
      const Tensor& other = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(acc), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& dst = t.grad(ia);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& dst = t.grad(ia);
    const Tensor& x = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) dst[i] += g[i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& dst = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var layer_norm(Var input, Var gain, Var shift, double eps) {
  const Tensor& x = input.value();
  Tensor out = layer_norm(x, gain.value(), shift.value(), eps);
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;

  // Keep normalized activations and inverse std for the reverse sweep.
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.raw() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (xr[j] - mean) * inv_std[r];
  }

  const std::size_t ix = input.id(), ig = gain.id(), is = shift.id();
  return input.tape().record(
      std::move(out), {input, gain, shift},
      [ix, ig, is, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          double* dg = t.grad(ig).raw();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) dg[j] += g[r * d + j] * xhat[r * d + j];
          }
        }
        if (t.requires_grad(is)) {
          double* ds = t.grad(is).raw();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) ds[j] += g[r * d + j];
          }
        }
        if (t.requires_grad(ix)) {
          double* dx = t.grad(ix).raw();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * gv[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * d + j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * gv[j];
              dx[r * d + j] +=
                  inv_std[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Var mse_loss(Var pred, Var target) {
  const double loss = mse_loss(pred.value(), target.value());
  const std::size_t ip = pred.id(), it = target.id();
  return pred.tape().record(Tensor::scalar(loss), {pred, target}, [ip, it](Tape& t,
                                                                          const Tensor& g) {
    const Tensor& p = t.value(ip);
    const Tensor& y = t.value(it);
    const double scale = 2.0 * g[0] / static_cast<double>(p.size());
    if (t.requires_grad(ip)) {
      Tensor& dp = t.grad(ip);
      for (std::size_t i = 0; i < p.size(); ++i) dp[i] += scale * (p[i] - y[i]);
    }
    if (t.requires_grad(it)) {
      Tensor& dy = t.grad(it);
      for (std::size_t i = 0; i < p.size(); ++i) dy[i] -= scale * (p[i] - y[i]);
    }
  });
}

Var embedding_bag(Var table, std::span<const EmbeddingBag> bags) {
  const Tensor& tv = table.value();
  require_rank(tv, 2, "embedding_bag table");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor out({bags.size(), d});
  for (std::size_t r = 0; r < bags.size(); ++r) {
    const auto& bag = bags[r];
    if (bag.ids.empty()) continue;
    const double w = bag.scale / static_cast<double>(bag.ids.size());
    double* dst = out.raw() + r * d;
    for (std::size_t id : bag.ids) {
      if (id >= vocab) {
        throw DimensionError("embedding_bag: token id " + std::to_string(id) +
                             " outside table of " + std::to_string(vocab) + " rows");
      }
      const double* src = tv.raw() + id * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
    }
  }
  const std::size_t itab = table.id();
  std::vector<EmbeddingBag> saved(bags.begin(), bags.end());
  return table.tape().record(
      std::move(out), {table}, [itab, d, saved = std::move(saved)](Tape& t, const Tensor& g) {
        double* dt = t.grad(itab).raw();
        for (std::size_t r = 0; r < saved.size(); ++r) {
          const auto& bag = saved[r];
          if (bag.ids.empty()) continue;
          const double w = bag.scale / static_cast<double>(bag.ids.size());
          for (std::size_t id : bag.ids) {
            for (std::size_t j = 0; j < d; ++j) dt[id * d + j] += w * g[r * d + j];
          }
        }
      });
}

}  // namespace fedtrans::numerics
