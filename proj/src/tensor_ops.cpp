#include "blockgcn/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

namespace blockgcn {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul expects 2-d operands");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dims differ: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  // i-k-j order: the inner loop is a contiguous axpy over the output row,
  // which vectorizes without reassociating any individual sum.
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& grad_a,
                     Tensor& grad_b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(g.ndim() == 2 && g.dim(0) == m && g.dim(1) == n, "matmul_backward: bad grad shape");
  require(grad_a.same_shape(a) && grad_b.same_shape(b), "matmul_backward: bad grad buffers");
  const double* pa = a.data();
  const double* pb = b.data();
  const double* pg = g.data();
  double* ga = grad_a.data();
  double* gb = grad_b.data();
  // grad_a = g @ b^T, grad_b = a^T @ g; both fused into one pass over g.
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double* brow = pb + kk * n;
      const double* grow = pg + i * n;
      double acc = 0.0;
      for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      ga[i * k + kk] += acc;
      const double av = pa[i * k + kk];
      double* gbrow = gb + kk * n;
      for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::int64_t i = 0, n = x.size(); i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
  return out;
}

void relu_backward(const Tensor& x, const Tensor& g, Tensor& grad_x) {
  require(x.same_shape(g) && x.same_shape(grad_x), "relu_backward: shape mismatch");
  const double* px = x.data();
  const double* pg = g.data();
  double* gx = grad_x.data();
  for (std::int64_t i = 0, n = x.size(); i < n; ++i) {
    if (px[i] > 0.0) gx[i] += pg[i];
  }
}

Tensor softmax_rows(const Tensor& logits) {
  require(logits.ndim() == 2, "softmax_rows expects [n, c]");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  require(c > 0, "softmax_rows: empty rows");
  Tensor out({n, c});
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    double* orow = out.data() + i * c;
    double mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::int64_t j = 0; j < c; ++j) orow[j] /= sum;
  }
  return out;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels,
                             Tensor* grad_logits) {
  require(logits.ndim() == 2, "cross entropy expects logits [n, c]");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("cross entropy: label count does not match batch");
  }
  require(n > 0, "cross entropy: empty batch");
  if (grad_logits != nullptr) {
    require(grad_logits->same_shape(logits), "cross entropy: bad grad buffer");
  }
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw ValueError("cross entropy: label out of range");
    const double* row = logits.data() + i * c;
    double mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - row[y];
    if (grad_logits != nullptr) {
      double* grow = grad_logits->data() + i * c;
      for (std::int64_t j = 0; j < c; ++j) {
        grow[j] += (std::exp(row[j] - mx) / sum - (j == y ? 1.0 : 0.0)) * inv_n;
      }
    }
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) throw NumericError("cross entropy produced a non-finite loss");
  return loss;
}

std::int64_t conv1d_out_len(std::int64_t t, const Conv1dSpec& spec) {
  if (spec.kernel < 1 || spec.stride < 1 || spec.dilation < 1 || spec.pad < 0) {
    throw ValueError("conv1d: kernel/stride/dilation must be >= 1 and pad >= 0");
  }
  const std::int64_t span = spec.dilation * (spec.kernel - 1) + 1;
  const std::int64_t out = (t + 2 * spec.pad - span) / spec.stride + 1;
  if (t + 2 * spec.pad < span || out < 1) {
    throw ShapeError("conv1d: input length " + std::to_string(t) +
                     " too short for receptive span " + std::to_string(span));
  }
  return out;
}

Tensor conv1d_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias,
                       const Conv1dSpec& spec) {
  require(x.ndim() == 3, "conv1d expects x [C,T,V]");
  require(weight.ndim() == 3, "conv1d expects weight [Cout,Cin,k]");
  const std::int64_t cin = x.dim(0), t = x.dim(1), v = x.dim(2);
  const std::int64_t cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != spec.kernel) {
    throw ShapeError("conv1d: weight " + weight.shape_str() + " does not match input channels " +
                     std::to_string(cin) + " and kernel " + std::to_string(spec.kernel));
  }
  require(bias.ndim() == 1 && bias.dim(0) == cout, "conv1d: bias must be [Cout]");
  const std::int64_t to = conv1d_out_len(t, spec);
  Tensor out({cout, to, v});
  for (std::int64_t co = 0; co < cout; ++co) {
    const double b = bias[co];
    for (std::int64_t i = 0; i < to * v; ++i) out.data()[co * to * v + i] = b;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const double* wrow = weight.data() + (co * cin + ci) * spec.kernel;
      const double* xc = x.data() + ci * t * v;
      for (std::int64_t tt = 0; tt < to; ++tt) {
        double* orow = out.data() + (co * to + tt) * v;
        const std::int64_t base = tt * spec.stride - spec.pad;
        for (std::int64_t kk = 0; kk < spec.kernel; ++kk) {
          const std::int64_t ti = base + kk * spec.dilation;
          if (ti < 0 || ti >= t) continue;
          const double w = wrow[kk];
          const double* xrow = xc + ti * v;
          for (std::int64_t vv = 0; vv < v; ++vv) orow[vv] += w * xrow[vv];
        }
      }
    }
  }
  return out;
}

void conv1d_temporal_backward(const Tensor& x, const Tensor& weight, const Conv1dSpec& spec,
                              const Tensor& g, Tensor& grad_x, Tensor& grad_weight,
                              Tensor& grad_bias) {
  const std::int64_t cin = x.dim(0), t = x.dim(1), v = x.dim(2);
  const std::int64_t cout = weight.dim(0);
  const std::int64_t to = conv1d_out_len(t, spec);
  require(g.ndim() == 3 && g.dim(0) == cout && g.dim(1) == to && g.dim(2) == v,
          "conv1d_backward: bad grad shape");
  require(grad_x.same_shape(x) && grad_weight.same_shape(weight), "conv1d_backward: bad buffers");
  require(grad_bias.ndim() == 1 && grad_bias.dim(0) == cout, "conv1d_backward: bad bias buffer");
  for (std::int64_t co = 0; co < cout; ++co) {
    double bacc = 0.0;
    const double* gc = g.data() + co * to * v;
    for (std::int64_t i = 0; i < to * v; ++i) bacc += gc[i];
    grad_bias[co] += bacc;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const double* wrow = weight.data() + (co * cin + ci) * spec.kernel;
      double* gwrow = grad_weight.data() + (co * cin + ci) * spec.kernel;
      const double* xc = x.data() + ci * t * v;
      double* gxc = grad_x.data() + ci * t * v;
      for (std::int64_t tt = 0; tt < to; ++tt) {
        const double* grow = gc + tt * v;
        const std::int64_t base = tt * spec.stride - spec.pad;
        for (std::int64_t kk = 0; kk < spec.kernel; ++kk) {
          const std::int64_t ti = base + kk * spec.dilation;
          if (ti < 0 || ti >= t) continue;
          const double* xrow = xc + ti * v;
          double* gxrow = gxc + ti * v;
          const double w = wrow[kk];
          double wacc = 0.0;
          for (std::int64_t vv = 0; vv < v; ++vv) {
            wacc += grow[vv] * xrow[vv];
            gxrow[vv] += w * grow[vv];
          }
          gwrow[kk] += wacc;
        }
      }
    }
  }
}

Tensor mean_pool_tv(const Tensor& x) {
  require(x.ndim() == 3, "mean_pool_tv expects [C,T,V]");
  const std::int64_t c = x.dim(0), t = x.dim(1), v = x.dim(2);
  require(t > 0 && v > 0, "mean_pool_tv: empty spatial extent");
  Tensor out({c});
  const double inv = 1.0 / static_cast<double>(t * v);
  for (std::int64_t cc = 0; cc < c; ++cc) {
    const double* row = x.data() + cc * t * v;
    double acc = 0.0;
    for (std::int64_t i = 0; i < t * v; ++i) acc += row[i];
    out[cc] = acc * inv;
  }
  return out;
}

void mean_pool_tv_backward(const std::vector<std::int64_t>& x_shape, const Tensor& g,
                           Tensor& grad_x) {
  require(x_shape.size() == 3, "mean_pool_tv_backward expects [C,T,V]");
  const std::int64_t c = x_shape[0], t = x_shape[1], v = x_shape[2];
  require(g.ndim() == 1 && g.dim(0) == c, "mean_pool_tv_backward: bad grad shape");
  require(grad_x.shape() == x_shape, "mean_pool_tv_backward: bad buffer");
  const double inv = 1.0 / static_cast<double>(t * v);
  for (std::int64_t cc = 0; cc < c; ++cc) {
    const double gv = g[cc] * inv;
    double* row = grad_x.data() + cc * t * v;
    for (std::int64_t i = 0; i < t * v; ++i) row[i] += gv;
  }
}

void add_inplace(Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "add_inplace: shape mismatch");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) pa[i] += pb[i];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
  require(a.same_shape(b), "axpy_inplace: shape mismatch");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) pa[i] += alpha * pb[i];
}

void scale_inplace(Tensor& a, double alpha) {
  double* pa = a.data();
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) pa[i] *= alpha;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace blockgcn
