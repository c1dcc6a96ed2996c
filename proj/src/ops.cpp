#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "diffurec/autodiff.hpp"
#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

Tape& tape_of(Var a) {
  if (!a.tape()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return tape_of(a);
}

std::vector<double> copy_of(std::span<const double> v) { return {v.begin(), v.end()}; }

// Number of times `b` is tiled across `a` (1 when shapes are equal).
std::size_t broadcast_count(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return 1;
  if (b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size())))
    return shape_size(a) / shape_size(b);
  throw DimensionError(std::string(op) + ": cannot combine shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

template <class Fwd, class DA, class DB>
Var binary(Var a, Var b, const char* name, Fwd fwd, DA da, DB db) {
  Tape& t = tape_of(a, b);
  const auto reps = broadcast_count(a.shape(), b.shape(), name);
  const auto av = a.value();
  const auto bv = b.value();
  const std::size_t nb = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % nb]);
  (void)reps;
  const auto ia = a.id(), ib = b.id();
  return t.push(a.shape(), std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, da, db](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  auto av = tp.value(ia);
                  auto bv = tp.value(ib);
                  const std::size_t nb = bv.size();
                  if (tp.needs_grad(ia)) {
                    auto ga = tp.grad(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(av[i], bv[i % nb]);
                  }
                  if (tp.needs_grad(ib)) {
                    auto gb = tp.grad(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * db(av[i], bv[i % nb]);
                  }
                });
}

template <class Fwd, class Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(x);
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const auto ix = x.id();
  return t.push(x.shape(), std::move(out), t.needs_grad(ix), [ix, deriv](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto y = tp.value(self);
    auto xv = tp.value(ix);
    auto gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], y[i]);
  });
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() != 2 || as.back() != bs[0])
    throw DimensionError("matmul: shapes " + shape_string(as) + " and " + shape_string(bs) + " do not align");
  const std::size_t k = bs[0], n = bs[1], m = shape_size(as) / k;
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  Shape os = as;
  os.back() = n;
  const auto ia = a.id(), ib = b.id();
  return t.push(std::move(os), std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, m, k, n](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  if (tp.needs_grad(ia)) gemm_nt(g.data(), tp.value(ib).data(), tp.grad(ia).data(), m, n, k);
                  if (tp.needs_grad(ib)) gemm_tn(tp.value(ia).data(), g.data(), tp.grad(ib).data(), m, k, n);
                });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[1])
    throw DimensionError("matmul_nt: shapes " + shape_string(as) + " and " + shape_string(bs) + " do not align");
  const std::size_t m = as[0], k = as[1], n = bs[0];
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return t.push(Shape{m, n}, std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, m, k, n](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  // dA = G[m,n] B[n,k]; dB = G^T[n,m] A[m,k]
                  if (tp.needs_grad(ia)) gemm_nn(g.data(), tp.value(ib).data(), tp.grad(ia).data(), m, n, k);
                  if (tp.needs_grad(ib)) gemm_tn(g.data(), tp.value(ia).data(), tp.grad(ib).data(), m, n, k);
                });
}

Var bmm(Var a, Var b, bool transpose_b) {
  Tape& t = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool ok = as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == (transpose_b ? bs[2] : bs[1]);
  if (!ok) throw DimensionError("bmm: shapes " + shape_string(as) + " and " + shape_string(bs) + " do not align");
  const std::size_t batch = as[0], m = as[1], k = as[2], n = transpose_b ? bs[1] : bs[2];
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < batch; ++i) {
    if (transpose_b)
      gemm_nt(av + i * m * k, bv + i * n * k, out.data() + i * m * n, m, k, n);
    else
      gemm_nn(av + i * m * k, bv + i * k * n, out.data() + i * m * n, m, k, n);
  }
  const auto ia = a.id(), ib = b.id();
  return t.push(Shape{batch, m, n}, std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, batch, m, k, n, transpose_b](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  const double* av = tp.value(ia).data();
                  const double* bv = tp.value(ib).data();
                  double* ga = tp.needs_grad(ia) ? tp.grad(ia).data() : nullptr;
                  double* gb = tp.needs_grad(ib) ? tp.grad(ib).data() : nullptr;
                  for (std::size_t i = 0; i < batch; ++i) {
                    const double* gi = g.data() + i * m * n;
                    if (transpose_b) {
                      // C = A B^T, B is [n,k]: dA = G B, dB = G^T A
                      if (ga) gemm_nn(gi, bv + i * n * k, ga + i * m * k, m, n, k);
                      if (gb) gemm_tn(gi, av + i * m * k, gb + i * n * k, m, n, k);
                    } else {
                      if (ga) gemm_nt(gi, bv + i * k * n, ga + i * m * k, m, n, k);
                      if (gb) gemm_tn(av + i * m * k, gi, gb + i * k * n, m, k, n);
                    }
                  }
                });
}

Var softmax(Var x, std::size_t axis) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axis >= s.size())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  const auto ix = x.id();
  return t.push(s, std::move(out), t.needs_grad(ix), [ix, outer, inner, len](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto y = tp.value(self);
    auto gx = tp.grad(ix);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double d = 0.0;
        for (std::size_t j = 0; j < len; ++j) d += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const auto idx = base + j * inner;
          gx[idx] += y[idx] * (g[idx] - d);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Shape& s = x.shape();
  const std::size_t d = s.back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()) +
                         " must match last dimension of " + shape_string(s));
  const std::size_t rows = shape_size(s) / d;
  const auto xv = x.value();
  const auto gv = gain.value();
  const auto bv = bias.value();
  std::vector<double> out(xv.size());
  // Saved per row: normalised values and 1/sigma.
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool ng = t.needs_grad(ix) || t.needs_grad(ig) || t.needs_grad(ib);
  return t.push(s, std::move(out), ng,
                [ix, ig, ib, rows, d, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                    Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  auto gv = tp.value(ig);
                  if (tp.needs_grad(ig) || tp.needs_grad(ib)) {
                    double* gg = tp.needs_grad(ig) ? tp.grad(ig).data() : nullptr;
                    double* gb = tp.needs_grad(ib) ? tp.grad(ib).data() : nullptr;
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < d; ++j) {
                        if (gg) gg[j] += g[r * d + j] * xhat[r * d + j];
                        if (gb) gb[j] += g[r * d + j];
                      }
                  }
                  if (!tp.needs_grad(ix)) return;
                  auto gx = tp.grad(ix);
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = g[r * d + j] * gv[j];
                      m1 += dh;
                      m2 += dh * xhat[r * d + j];
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = g[r * d + j] * gv[j];
                      gx[r * d + j] += inv_sigma[r] * (dh - m1 - xhat[r * d + j] * m2);
                    }
                  }
                });
}

Var dropout(Var x, double p, bool train, Rng* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!train || p == 0.0) return x;
  if (!rng) throw ContractError("dropout in train mode needs an Rng");
  Tape& t = tape_of(x);
  const auto xv = x.value();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng->uniform() < p ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  const auto ix = x.id();
  return t.push(x.shape(), std::move(out), t.needs_grad(ix), [ix, mask = std::move(mask)](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  const auto ix = x.id();
  return t.push(std::move(shape), copy_of(x.value()), t.needs_grad(ix), [ix](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var permute(Var x, const std::vector<std::size_t>& axes) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw DimensionError("permute: axis list does not match rank of " + shape_string(s));
  std::vector<bool> seen(s.size(), false);
  Shape os(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]]) throw DimensionError("permute: invalid axis list");
    seen[axes[i]] = true;
    os[i] = s[axes[i]];
  }
  // src_index[k] = flat source offset for output element k.
  const auto in_strides = strides_of(s);
  const std::size_t n = shape_size(s);
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(s.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < os.size(); ++i) off += idx[i] * in_strides[axes[i]];
    src[k] = off;
    for (std::size_t i = os.size(); i-- > 0;) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  const auto xv = x.value();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[src[k]];
  const auto ix = x.id();
  return t.push(std::move(os), std::move(out), t.needs_grad(ix), [ix, src = std::move(src)](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[src[k]] += g[k];
  });
}

Var embedding_lookup(Var table, std::span<const int> indices) {
  Tape& t = tape_of(table);
  const Shape& s = table.shape();
  if (s.size() != 2) throw DimensionError("embedding_lookup: table must be rank 2, got " + shape_string(s));
  const std::size_t rows = s[0], d = s[1];
  for (int i : indices)
    if (i < 0 || static_cast<std::size_t>(i) >= rows)
      throw std::out_of_range("embedding_lookup: index " + std::to_string(i) + " outside table of " +
                              std::to_string(rows) + " rows");
  if (indices.empty()) throw DimensionError("embedding_lookup: no indices");
  const auto tv = table.value();
  std::vector<double> out(indices.size() * d, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] == 0) continue;
    std::copy_n(tv.data() + static_cast<std::size_t>(indices[r]) * d, d, out.data() + r * d);
  }
  const auto it = table.id();
  std::vector<int> saved(indices.begin(), indices.end());
  return t.push(Shape{indices.size(), d}, std::move(out), t.needs_grad(it),
                [it, d, saved = std::move(saved)](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  auto gt = tp.grad(it);
                  for (std::size_t r = 0; r < saved.size(); ++r) {
                    if (saved[r] == 0) continue;
                    double* dst = gt.data() + static_cast<std::size_t>(saved[r]) * d;
                    for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
                  }
                });
}

Var slice_rows(Var table, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(table);
  const Shape& s = table.shape();
  if (s.size() != 2 || begin >= end || end > s[0])
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                         shape_string(s));
  const std::size_t d = s[1];
  const auto tv = table.value();
  std::vector<double> out(tv.begin() + static_cast<std::ptrdiff_t>(begin * d),
                          tv.begin() + static_cast<std::ptrdiff_t>(end * d));
  const auto it = table.id();
  return t.push(Shape{end - begin, d}, std::move(out), t.needs_grad(it), [it, begin, d](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto gt = tp.grad(it);
    for (std::size_t i = 0; i < g.size(); ++i) gt[begin * d + i] += g[i];
  });
}

Var select(Var x, std::size_t axis, std::size_t index) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axis >= s.size() || index >= s[axis] || s.size() < 2)
    throw DimensionError("select: axis " + std::to_string(axis) + " index " + std::to_string(index) +
                         " invalid for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) os.push_back(s[i]);
  const auto xv = x.value();
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + (o * len + index) * inner, inner, out.data() + o * inner);
  const auto ix = x.id();
  return t.push(std::move(os), std::move(out), t.needs_grad(ix),
                [ix, outer, inner, len, index](Tape& tp, std::uint32_t self) {
                  auto g = tp.grad(self);
                  auto gx = tp.grad(ix);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t j = 0; j < inner; ++j) gx[(o * len + index) * inner + j] += g[o * inner + j];
                });
}

Var expand(Var x, std::size_t axis, std::size_t n) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axis > s.size() || n == 0) throw DimensionError("expand: invalid axis for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis; i < s.size(); ++i) inner *= s[i];
  Shape os = s;
  os.insert(os.begin() + static_cast<std::ptrdiff_t>(axis), n);
  const auto xv = x.value();
  std::vector<double> out(outer * n * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.data() + o * inner, inner, out.data() + (o * n + r) * inner);
  const auto ix = x.id();
  return t.push(std::move(os), std::move(out), t.needs_grad(ix), [ix, outer, inner, n](Tape& tp, std::uint32_t self) {
    auto g = tp.grad(self);
    auto gx = tp.grad(ix);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < inner; ++j) gx[o * inner + j] += g[(o * n + r) * inner + j];
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value()) s += v;
  const auto ix = x.id();
  return t.push(Shape{1}, {s}, t.needs_grad(ix), [ix](Tape& tp, std::uint32_t self) {
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad(ix)) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var dot(Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError("dot: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  return sum(mul(a, b));
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Tape& t = tape_of(logits);
  const Shape& s = logits.shape();
  if (s.size() != 2) throw DimensionError("cross_entropy: logits must be [batch, classes], got " + shape_string(s));
  const std::size_t rows = s[0], n = s[1];
  if (targets.size() != rows)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  for (int tgt : targets)
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= n)
      throw std::invalid_argument("cross_entropy: target " + std::to_string(tgt) + " outside [0, " +
                                  std::to_string(n) + ")");
  const auto lv = logits.value();
  std::vector<double> probs(lv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* lr = lv.data() + r * n;
    const double mx = *std::max_element(lr, lr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[r * n + j] = std::exp(lr[j] - mx);
      z += probs[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= z;
    total += (std::log(z) + mx) - lr[targets[r]];
  }
  const auto il = logits.id();
  std::vector<int> saved(targets.begin(), targets.end());
  return t.push(Shape{1}, {total / static_cast<double>(rows)}, t.needs_grad(il),
                [il, rows, n, probs = std::move(probs), saved = std::move(saved)](Tape& tp, std::uint32_t self) {
                  const double g = tp.grad(self)[0] / static_cast<double>(rows);
                  auto gl = tp.grad(il);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) gl[r * n + j] += g * probs[r * n + j];
                    gl[r * n + static_cast<std::size_t>(saved[r])] -= g;
                  }
                });
}

Var cross_entropy_logits(Var logits, int target) {
  if (logits.shape().size() != 1)
    throw DimensionError("cross_entropy_logits: logits must be rank 1, got " + shape_string(logits.shape()));
  const auto n = logits.shape()[0];
  if (target < 0 || static_cast<std::size_t>(target) >= n)
    throw std::invalid_argument("cross_entropy_logits: target " + std::to_string(target) + " outside [0, " +
                                std::to_string(n) + ")");
  const int tg[1] = {target};
  return cross_entropy(reshape(logits, Shape{1, n}), tg);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape t(false);
  return matmul(t.constant(a), t.constant(b)).tensor();
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  Tape t(false);
  return softmax(t.constant(x), axis).tensor();
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Tape t(false);
  return layer_norm(t.constant(x), t.constant(gain), t.constant(bias), eps).tensor();
}

double cross_entropy_logits(const Tensor& logits, int target) {
  Tape t(false);
  return cross_entropy_logits(t.constant(logits), target).item();
}

}  // namespace diffurec
