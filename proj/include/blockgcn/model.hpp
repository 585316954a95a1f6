#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "blockgcn/blockgc.hpp"
#include "blockgcn/data.hpp"
#include "blockgcn/encodings.hpp"
#include "blockgcn/mstc.hpp"
#include "blockgcn/rng.hpp"
#include "blockgcn/skeleton.hpp"
#include "blockgcn/tensor.hpp"

namespace blockgcn {

enum class EncodingMode { none, shared, feature_wise };
EncodingMode encoding_mode_from_string(const std::string& s);
std::string to_string(EncodingMode m);

struct ModelConfig {
  std::string skeleton = "ntu25";
  std::int64_t num_classes = 4;
  std::int64_t frames = 16;
  GCVariant variant = GCVariant::block;
  std::int64_t k = 4;
  std::vector<std::int64_t> channels = {16, 16, 32, 32};
  std::vector<std::int64_t> strides = {1, 1, 2, 1};
  EncodingMode topo_mode = EncodingMode::shared;
  bool topo_l2 = true;
  DistanceKind topo_distance = DistanceKind::shortest_path;
  EncodingMode stat_mode = EncodingMode::feature_wise;
  std::int64_t stat_hidden = 64;
  std::vector<MSTCBranchSpec> branches = default_mstc_branches();
  bool temporal_enabled = true;
  AInit a_init = AInit::physical;
  bool bias = true;

  std::int64_t num_blocks() const { return static_cast<std::int64_t>(channels.size()); }
  std::int64_t block_in(std::int64_t l) const { return l == 0 ? channels[0] : channels[l - 1]; }
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);

  // Smallest config that exercises every code path; V=5, 2 blocks.
  static ModelConfig tiny();
  // Default configuration for the synthetic benchmark; V=25, 4 blocks.
  static ModelConfig desk();
  // Full-scale layout: 10 blocks up to 256 channels, 64 frames.
  static ModelConfig paper();
};

struct BlockState {
  BlockGCParams gc;
  TopoEncoding topo;   // table empty when disabled
  StatEncoding stat;   // w1 empty when disabled
  MSTCParams tc;       // branches empty when temporal disabled
  Tensor res1_w, res1_b;  // 1x1 projection on the spatial residual, if Din != Dout
  Tensor res2_w, res2_b;  // strided 1x1 projection on the block residual, if needed
};

struct ModelState {
  ModelConfig config;
  Skeleton skeleton;
  DistanceMatrix dist;
  Tensor stem_w, stem_b;  // [D0,3,1], [D0]
  std::vector<BlockState> blocks;
  Tensor cls_w, cls_b;  // [Dlast, classes] (zero-init), [classes]

  static ModelState init(const ModelConfig& config, std::uint64_t seed);
  // Same, but with an explicit skeleton instead of loading the preset named
  // by the config (checkpoints carry their skeleton and use this path).
  static ModelState init_with_skeleton(const ModelConfig& config, Skeleton skeleton,
                                       std::uint64_t seed);
  ModelState zeros_like() const;
  // Every trainable tensor exactly once, in a fixed order, with a
  // hierarchical dot-separated name.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

std::int64_t model_param_count(const ModelState& state);
// Same number derived from config arithmetic alone; documented in README.
std::int64_t model_param_formula(const ModelConfig& config, std::int64_t v,
                                 std::int64_t max_distance);

// Per-sample activations kept for the backward pass.
struct ForwardContext {
  Tensor x;     // [3,T,V] stem input
  Tensor rbar;  // [V,V,3] when the statistical encoding is on
  struct BlockTrace {
    Tensor input;  // block input X
    Tensor b, c;   // encodings as consumed (empty when off)
    StatActivations stat_acts;
    BlockGCSaved gc_saved;
    Tensor s;  // spatial output + residual (MS-TC input)
    MSTCSaved tc_saved;
    Tensor pre_relu;
  };
  std::vector<BlockTrace> blocks;
  Tensor features;  // pooled [Dlast]
  Tensor logits;
};

// seq is [T,V,3]. Returns logits [num_classes].
Tensor model_forward(const ModelState& state, const Tensor& seq, ForwardContext* ctx = nullptr);
// Accumulates parameter gradients into `grads` (a zeros_like clone).
void model_backward(const ModelState& state, const ForwardContext& ctx, const Tensor& g_logits,
                    ModelState& grads);

// Mean cross-entropy over the batch plus accumulated gradients. Per-sample
// gradients are summed in batch order whatever `threads` is, so results are
// bit-identical across thread counts.
double model_loss_and_grads(const ModelState& state,
                            const std::vector<const SkeletonSequence*>& batch, ModelState& grads,
                            int threads = 1, std::int64_t* correct = nullptr);

struct Prediction {
  std::int64_t label = 0;
  Tensor probs;
};
Prediction model_predict(const ModelState& state, const Tensor& seq);

}  // namespace blockgcn
