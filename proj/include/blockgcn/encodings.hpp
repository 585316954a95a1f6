#pragma once

#include <cstdint>

#include "blockgcn/rng.hpp"
#include "blockgcn/skeleton.hpp"
#include "blockgcn/tensor.hpp"

namespace blockgcn {

// Learnable weight table indexed by inter-joint graph distance. A pair at
// distance d contributes table[d] (shared) or table[d][channel]
// (feature-wise) to the spatial aggregation matrix.
struct TopoEncoding {
  Tensor table;  // [L] shared, [L, D] feature_wise; L = max distance + 1
  bool feature_wise = false;
  bool l2_normalize = true;

  // Table starts at zero so an untrained encoding is a no-op.
  static TopoEncoding make(std::int64_t max_distance, bool feature_wise, std::int64_t channels,
                           bool l2_normalize);
  std::int64_t table_len() const { return table.dim(0); }
};

// B[i][j](,d) = table[dist(i,j)](,d), optionally row L2-normalized per
// channel slice. Output [V,V] shared or [V,V,D] feature-wise.
Tensor build_B(const TopoEncoding& enc, const DistanceMatrix& dist);
// Accumulates d(sum g*B)/d(table) into grad_table (same shape as the table).
void build_B_backward(const TopoEncoding& enc, const DistanceMatrix& dist, const Tensor& g,
                      Tensor& grad_table);

// Mean over frames of pairwise relative coordinates:
// rbar[i][j] = (1/T) sum_t (x[t,i,:] - x[t,j,:]). seq is [T,V,3].
Tensor temporal_mean_relative(const Tensor& seq);

// Two-layer MLP mapping each pairwise mean offset to per-channel weights.
struct StatEncoding {
  Tensor w1;  // [3, hidden]
  Tensor b1;  // [hidden]
  Tensor w2;  // [hidden, D] (D = 1 when shared)
  Tensor b2;  // [D]
  bool feature_wise = true;

  static StatEncoding init(std::int64_t hidden, bool feature_wise, std::int64_t channels,
                           Rng& rng);
  std::int64_t hidden() const { return w1.dim(1); }
  std::int64_t out_channels() const { return w2.dim(1); }
};

// Activations saved by build_C for the backward pass. Only the hidden
// pre-activation is kept; the ReLU output is recomputed on demand.
struct StatActivations {
  Tensor z1;  // [V*V, hidden]
};

// C[i][j][:] = w2^T relu(w1^T rbar[i][j] + b1) + b2, shape [V,V,D].
Tensor build_C(const StatEncoding& enc, const Tensor& rbar, StatActivations* saved = nullptr);
// Accumulates MLP parameter gradients given upstream g of shape [V,V,D].
void build_C_backward(const StatEncoding& enc, const Tensor& rbar, const StatActivations& saved,
                      const Tensor& g, Tensor& grad_w1, Tensor& grad_b1, Tensor& grad_w2,
                      Tensor& grad_b2);

}  // namespace blockgcn
