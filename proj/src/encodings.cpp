#include "blockgcn/encodings.hpp"

#include <cmath>

#include "blockgcn/tensor_ops.hpp"

namespace blockgcn {

TopoEncoding TopoEncoding::make(std::int64_t max_distance, bool feature_wise,
                                std::int64_t channels, bool l2_normalize) {
  if (max_distance < 0) throw ValueError("max_distance must be >= 0");
  TopoEncoding enc;
  enc.feature_wise = feature_wise;
  enc.l2_normalize = l2_normalize;
  if (feature_wise) {
    if (channels < 1) throw ValueError("feature-wise table needs channels >= 1");
    enc.table = Tensor({max_distance + 1, channels});
  } else {
    enc.table = Tensor({max_distance + 1});
  }
  return enc;
}

namespace {

void check_table_covers(const TopoEncoding& enc, const DistanceMatrix& dist) {
  if (dist.max_entry() >= enc.table_len()) {
    throw ValueError("distance " + std::to_string(dist.max_entry()) +
                     " exceeds encoding table of length " + std::to_string(enc.table_len()));
  }
}

// Rows shorter than this are scaled by 1/kRowNormFloor instead of to unit
// length; without the floor the normalization gradient grows like 1/||row||
// and the first optimizer steps away from the zero-initialized table blow up.
constexpr double kRowNormFloor = 0.1;

// Unit-normalizes rows of a [V,V] slice with channel stride `cs`. All-zero
// rows stay zero; rows below the norm floor are scaled linearly.
void l2_rows(double* b, std::int64_t v, std::int64_t cs) {
  for (std::int64_t i = 0; i < v; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < v; ++j) {
      const double x = b[(i * v + j) * cs];
      sq += x * x;
    }
    const double n = std::max(std::sqrt(sq), kRowNormFloor);
    for (std::int64_t j = 0; j < v; ++j) b[(i * v + j) * cs] /= n;
  }
}

}  // namespace

Tensor build_B(const TopoEncoding& enc, const DistanceMatrix& dist) {
  check_table_covers(enc, dist);
  const std::int64_t v = dist.v;
  const std::int64_t d = enc.feature_wise ? enc.table.dim(1) : 1;
  Tensor b = enc.feature_wise ? Tensor({v, v, d}) : Tensor({v, v});
  for (std::int64_t i = 0; i < v; ++i) {
    for (std::int64_t j = 0; j < v; ++j) {
      const std::int64_t k = dist.at(i, j);
      for (std::int64_t c = 0; c < d; ++c) {
        b[(i * v + j) * d + c] = enc.table[k * d + c];
      }
    }
  }
  if (enc.l2_normalize) {
    for (std::int64_t c = 0; c < d; ++c) l2_rows(b.data() + c, v, d);
  }
  return b;
}

void build_B_backward(const TopoEncoding& enc, const DistanceMatrix& dist, const Tensor& g,
                      Tensor& grad_table) {
  check_table_covers(enc, dist);
  if (!grad_table.same_shape(enc.table)) {
    throw ShapeError("build_B_backward: grad buffer shape mismatch");
  }
  const std::int64_t v = dist.v;
  const std::int64_t d = enc.feature_wise ? enc.table.dim(1) : 1;
  const std::int64_t expect = enc.feature_wise ? v * v * d : v * v;
  if (g.size() != expect) throw ShapeError("build_B_backward: bad upstream grad shape");

  if (!enc.l2_normalize) {
    for (std::int64_t i = 0; i < v; ++i) {
      for (std::int64_t j = 0; j < v; ++j) {
        const std::int64_t k = dist.at(i, j);
        for (std::int64_t c = 0; c < d; ++c) {
          grad_table[k * d + c] += g[(i * v + j) * d + c];
        }
      }
    }
    return;
  }

  // Above the floor y = x / ||x||, so dx = (dy - y * (y . dy)) / ||x||.
  // Below it the forward was the linear map x / kRowNormFloor.
  for (std::int64_t c = 0; c < d; ++c) {
    for (std::int64_t i = 0; i < v; ++i) {
      double sq = 0.0;
      for (std::int64_t j = 0; j < v; ++j) {
        const double x = enc.table[dist.at(i, j) * d + c];
        sq += x * x;
      }
      const double n = std::sqrt(sq);
      if (n < kRowNormFloor) {
        for (std::int64_t j = 0; j < v; ++j) {
          grad_table[dist.at(i, j) * d + c] += g[(i * v + j) * d + c] / kRowNormFloor;
        }
        continue;
      }
      double dot = 0.0;
      for (std::int64_t j = 0; j < v; ++j) {
        const double y = enc.table[dist.at(i, j) * d + c] / n;
        dot += y * g[(i * v + j) * d + c];
      }
      for (std::int64_t j = 0; j < v; ++j) {
        const double y = enc.table[dist.at(i, j) * d + c] / n;
        grad_table[dist.at(i, j) * d + c] += (g[(i * v + j) * d + c] - y * dot) / n;
      }
    }
  }
}

Tensor temporal_mean_relative(const Tensor& seq) {
  if (seq.ndim() != 3 || seq.dim(2) != 3) {
    throw ShapeError("temporal_mean_relative expects [T,V,3], got " + seq.shape_str());
  }
  const std::int64_t t = seq.dim(0), v = seq.dim(1);
  if (t < 1) throw ValueError("temporal_mean_relative: need at least one frame");
  Tensor rbar({v, v, 3});
  const double inv_t = 1.0 / static_cast<double>(t);
  for (std::int64_t i = 0; i < v; ++i) {
    for (std::int64_t j = 0; j < v; ++j) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (std::int64_t tt = 0; tt < t; ++tt) {
        const double* xi = seq.data() + (tt * v + i) * 3;
        const double* xj = seq.data() + (tt * v + j) * 3;
        acc[0] += xi[0] - xj[0];
        acc[1] += xi[1] - xj[1];
        acc[2] += xi[2] - xj[2];
      }
      double* out = rbar.data() + (i * v + j) * 3;
      out[0] = acc[0] * inv_t;
      out[1] = acc[1] * inv_t;
      out[2] = acc[2] * inv_t;
    }
  }
  return rbar;
}

StatEncoding StatEncoding::init(std::int64_t hidden, bool feature_wise, std::int64_t channels,
                                Rng& rng) {
  if (hidden < 1) throw ValueError("stat encoding hidden width must be >= 1");
  const std::int64_t d = feature_wise ? channels : 1;
  if (d < 1) throw ValueError("stat encoding output width must be >= 1");
  StatEncoding enc;
  enc.feature_wise = feature_wise;
  enc.w1 = Tensor({3, hidden});
  enc.b1 = Tensor({hidden});
  enc.w2 = Tensor({hidden, d});
  enc.b2 = Tensor({d});
  const double bound1 = 1.0 / std::sqrt(3.0);
  for (std::int64_t i = 0; i < enc.w1.size(); ++i) enc.w1[i] = rng.uniform(-bound1, bound1);
  for (std::int64_t i = 0; i < enc.b1.size(); ++i) enc.b1[i] = rng.uniform(-bound1, bound1);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::int64_t i = 0; i < enc.w2.size(); ++i) enc.w2[i] = rng.uniform(-bound2, bound2);
  for (std::int64_t i = 0; i < enc.b2.size(); ++i) enc.b2[i] = rng.uniform(-bound2, bound2);
  return enc;
}

Tensor build_C(const StatEncoding& enc, const Tensor& rbar, StatActivations* saved) {
  if (rbar.ndim() != 3 || rbar.dim(2) != 3 || rbar.dim(0) != rbar.dim(1)) {
    throw ShapeError("build_C expects rbar [V,V,3], got " + rbar.shape_str());
  }
  const std::int64_t v = rbar.dim(0);
  const std::int64_t h = enc.hidden();
  const std::int64_t d = enc.out_channels();
  const Tensor flat = rbar.reshaped({v * v, 3});
  Tensor z1 = matmul(flat, enc.w1);
  for (std::int64_t p = 0; p < v * v; ++p) {
    double* row = z1.data() + p * h;
    for (std::int64_t k = 0; k < h; ++k) row[k] += enc.b1[k];
  }
  Tensor a1 = relu(z1);
  Tensor c = matmul(a1, enc.w2);
  for (std::int64_t p = 0; p < v * v; ++p) {
    double* row = c.data() + p * d;
    for (std::int64_t k = 0; k < d; ++k) row[k] += enc.b2[k];
  }
  if (saved != nullptr) saved->z1 = std::move(z1);
  return c.reshaped({v, v, d});
}

void build_C_backward(const StatEncoding& enc, const Tensor& rbar, const StatActivations& saved,
                      const Tensor& g, Tensor& grad_w1, Tensor& grad_b1, Tensor& grad_w2,
                      Tensor& grad_b2) {
  const std::int64_t v = rbar.dim(0);
  const std::int64_t h = enc.hidden();
  const std::int64_t d = enc.out_channels();
  if (g.ndim() != 3 || g.dim(0) != v || g.dim(1) != v || g.dim(2) != d) {
    throw ShapeError("build_C_backward: bad upstream grad shape " + g.shape_str());
  }
  if (!grad_w1.same_shape(enc.w1) || !grad_b1.same_shape(enc.b1) ||
      !grad_w2.same_shape(enc.w2) || !grad_b2.same_shape(enc.b2)) {
    throw ShapeError("build_C_backward: grad buffer shape mismatch");
  }
  const Tensor gflat = g.reshaped({v * v, d});
  for (std::int64_t p = 0; p < v * v; ++p) {
    const double* row = gflat.data() + p * d;
    for (std::int64_t k = 0; k < d; ++k) grad_b2[k] += row[k];
  }
  const Tensor a1 = relu(saved.z1);
  Tensor ga1({v * v, h});
  matmul_backward(a1, enc.w2, gflat, ga1, grad_w2);
  Tensor gz1({v * v, h});
  relu_backward(saved.z1, ga1, gz1);
  for (std::int64_t p = 0; p < v * v; ++p) {
    const double* row = gz1.data() + p * h;
    for (std::int64_t k = 0; k < h; ++k) grad_b1[k] += row[k];
  }
  const Tensor flat = rbar.reshaped({v * v, 3});
  Tensor grad_flat({v * v, 3});
  matmul_backward(flat, enc.w1, gz1, grad_flat, grad_w1);
}

}  // namespace blockgcn
