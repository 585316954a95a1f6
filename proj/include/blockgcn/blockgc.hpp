#pragma once

#include <cstdint>
#include <string>

#include "blockgcn/rng.hpp"
#include "blockgcn/skeleton.hpp"
#include "blockgcn/tensor.hpp"

namespace blockgcn {

enum class GCVariant { block, vanilla, decoupling };
enum class AInit { physical, identity, ones, uniform };
// Aggregation code path. `fast` collapses the per-channel matrices to one
// matrix per group; only legal when C is absent and B is absent or shared.
// `automatic` picks fast whenever legal. Results are bitwise identical.
enum class AggPath { automatic, general, fast };

GCVariant gc_variant_from_string(const std::string& s);
std::string to_string(GCVariant v);
AInit a_init_from_string(const std::string& s);
std::string to_string(AInit i);

// Spatial layer parameters. Channels split into K groups; each group owns an
// adjacency matrix. The projection is per-group (block), one full matrix
// (vanilla, decoupling), with vanilla additionally pinned to K=1.
struct BlockGCParams {
  GCVariant variant = GCVariant::block;
  std::int64_t k = 1;
  std::int64_t v = 0;
  std::int64_t d_in = 0;
  std::int64_t d_out = 0;
  bool has_bias = true;
  Tensor a;     // [K, V, V]
  Tensor w;     // block: [K, Din/K, Dout/K]; vanilla/decoupling: [Din, Dout]
  Tensor bias;  // [Dout] when has_bias

  static BlockGCParams init(GCVariant variant, std::int64_t k, std::int64_t d_in,
                            std::int64_t d_out, const Skeleton& skeleton, AInit a_init, Rng& rng,
                            bool bias = true);
  // Same shapes, all zeros; used as a gradient buffer.
  BlockGCParams zeros_like() const;

  std::int64_t group_in() const { return d_in / k; }
  std::int64_t group_out() const { return d_out / k; }
};

// Parameter and multiply-accumulate counts for the layer at sequence length T.
std::int64_t blockgc_param_count(const BlockGCParams& p);
std::int64_t blockgc_projection_params(GCVariant variant, std::int64_t k, std::int64_t d_in,
                                       std::int64_t d_out);
std::int64_t blockgc_flop_count(const BlockGCParams& p, std::int64_t t);

struct BlockGCSaved {
  Tensor y;  // aggregated features before projection, [Din, T, V]
};

// h is [Din, T, V]. b is empty, [V,V] (shared across channels) or [V,V,Din].
// c is empty, [V,V,1] (shared) or [V,V,Din]. Output [Dout, T, V]: per input
// channel d of group g, y[d,t,v] = sum_u (A_g + B(,d) + C(,d))[v,u] h[d,t,u],
// then each group is projected by its weight block.
Tensor blockgc_forward(const BlockGCParams& p, const Tensor& h, const Tensor& b, const Tensor& c,
                       BlockGCSaved* saved = nullptr, AggPath path = AggPath::automatic);

// Accumulates into grads (shape-matched via zeros_like), grad_h, and the
// optional encoding grads (pass buffers shaped like b / c, or null).
void blockgc_backward(const BlockGCParams& p, const Tensor& h, const Tensor& b, const Tensor& c,
                      const BlockGCSaved& saved, const Tensor& g, BlockGCParams& grads,
                      Tensor& grad_h, Tensor* grad_b, Tensor* grad_c,
                      AggPath path = AggPath::automatic);

}  // namespace blockgcn
