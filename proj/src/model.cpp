#include "blockgcn/model.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <thread>

#include "blockgcn/error.hpp"
#include "blockgcn/tensor_ops.hpp"

namespace blockgcn {

namespace {

const Conv1dSpec kOneByOne{1, 1, 0, 1};

std::string join_i64(const std::vector<std::int64_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::vector<std::int64_t> split_i64(const std::string& s) {
  std::vector<std::int64_t> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    try {
      out.push_back(std::stoll(tok));
    } catch (...) {
      throw ConfigError("expected integer list, got: " + s);
    }
  }
  return out;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true/false, got: " + s);
}

}  // namespace

EncodingMode encoding_mode_from_string(const std::string& s) {
  if (s == "none") return EncodingMode::none;
  if (s == "shared") return EncodingMode::shared;
  if (s == "feature_wise") return EncodingMode::feature_wise;
  throw ConfigError("unknown encoding mode: " + s);
}

std::string to_string(EncodingMode m) {
  switch (m) {
    case EncodingMode::none: return "none";
    case EncodingMode::shared: return "shared";
    case EncodingMode::feature_wise: return "feature_wise";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (channels.empty()) throw ConfigError("config: needs at least one block");
  if (channels.size() != strides.size()) {
    throw ConfigError("config: channels and strides must have equal length");
  }
  if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
  if (frames < 1) throw ConfigError("config: frames must be >= 1");
  if (k < 1) throw ConfigError("config: k must be >= 1");
  if (variant == GCVariant::vanilla && k != 1) throw ConfigError("config: vanilla requires k=1");
  std::int64_t stride_product = 1;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    if (channels[l] % k != 0) {
      throw ConfigError("config: channels[" + std::to_string(l) + "]=" +
                        std::to_string(channels[l]) + " not divisible by k=" + std::to_string(k));
    }
    if (strides[l] < 1) throw ConfigError("config: strides must be >= 1");
    stride_product *= strides[l];
    if (!temporal_enabled && strides[l] != 1) {
      throw ConfigError("config: temporal_enabled=false requires all strides = 1");
    }
  }
  if (frames % stride_product != 0) {
    throw ConfigError("config: stride product " + std::to_string(stride_product) +
                      " must divide frames " + std::to_string(frames));
  }
  if (stat_mode != EncodingMode::none && stat_hidden < 1) {
    throw ConfigError("config: stat_hidden must be >= 1");
  }
  if (temporal_enabled && branches.empty()) {
    throw ConfigError("config: temporal_enabled needs at least one branch");
  }
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["skeleton"] = skeleton;
  kv["num_classes"] = std::to_string(num_classes);
  kv["frames"] = std::to_string(frames);
  kv["variant"] = to_string(variant);
  kv["k"] = std::to_string(k);
  kv["channels"] = join_i64(channels);
  kv["strides"] = join_i64(strides);
  kv["topo_mode"] = to_string(topo_mode);
  kv["topo_l2"] = bool_str(topo_l2);
  kv["topo_distance"] =
      topo_distance == DistanceKind::shortest_path ? "shortest_path" : "level_difference";
  kv["stat_mode"] = to_string(stat_mode);
  kv["stat_hidden"] = std::to_string(stat_hidden);
  std::ostringstream br;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (i) br << ',';
    br << branch_spec_to_string(branches[i]);
  }
  kv["branches"] = br.str();
  kv["temporal_enabled"] = bool_str(temporal_enabled);
  kv["a_init"] = to_string(a_init);
  kv["bias"] = bool_str(bias);
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    try {
      if (key == "skeleton") c.skeleton = value;
      else if (key == "num_classes") c.num_classes = std::stoll(value);
      else if (key == "frames") c.frames = std::stoll(value);
      else if (key == "variant") c.variant = gc_variant_from_string(value);
      else if (key == "k") c.k = std::stoll(value);
      else if (key == "channels") c.channels = split_i64(value);
      else if (key == "strides") c.strides = split_i64(value);
      else if (key == "topo_mode") c.topo_mode = encoding_mode_from_string(value);
      else if (key == "topo_l2") c.topo_l2 = parse_bool(value);
      else if (key == "topo_distance") {
        if (value == "shortest_path") c.topo_distance = DistanceKind::shortest_path;
        else if (value == "level_difference") c.topo_distance = DistanceKind::level_difference;
        else throw ConfigError("unknown topo_distance: " + value);
      } else if (key == "stat_mode") c.stat_mode = encoding_mode_from_string(value);
      else if (key == "stat_hidden") c.stat_hidden = std::stoll(value);
      else if (key == "branches") {
        c.branches.clear();
        std::istringstream is(value);
        std::string tok;
        while (std::getline(is, tok, ',')) c.branches.push_back(branch_spec_from_string(tok));
      } else if (key == "temporal_enabled") c.temporal_enabled = parse_bool(value);
      else if (key == "a_init") c.a_init = a_init_from_string(value);
      else if (key == "bias") c.bias = parse_bool(value);
      else throw ConfigError("unknown config key: " + key);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for config key " + key + ": " + value);
    }
  }
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.skeleton = "tiny5";
  c.num_classes = 3;
  c.frames = 8;
  c.k = 2;
  c.channels = {8, 8};
  c.strides = {1, 1};
  c.stat_hidden = 16;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.num_classes = 120;
  c.frames = 64;
  c.channels = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  c.strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
  c.stat_hidden = 64;
  return c;
}

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
  return init_with_skeleton(config, preset(config.skeleton), seed);
}

ModelState ModelState::init_with_skeleton(const ModelConfig& config, Skeleton skeleton,
                                          std::uint64_t seed) {
  config.validate();
  ModelState st;
  st.config = config;
  st.skeleton = std::move(skeleton);
  st.dist = config.topo_distance == DistanceKind::shortest_path
                ? shortest_path_distances(st.skeleton)
                : level_difference_distances(st.skeleton);
  Rng rng(seed);
  const std::int64_t d0 = config.channels[0];
  auto conv_fill = [&rng](Tensor& w, Tensor& b, std::int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  };
  st.stem_w = Tensor({d0, 3, 1});
  st.stem_b = Tensor({d0});
  // A deliberately small stem keeps early activations — and with them the
  // curvature seen by the classifier head — low enough for the warmup
  // learning rate, since no normalization layer rescales them later.
  conv_fill(st.stem_w, st.stem_b, 3);
  for (std::int64_t i = 0; i < st.stem_w.size(); ++i) st.stem_w[i] *= 0.15;
  for (std::int64_t i = 0; i < st.stem_b.size(); ++i) st.stem_b[i] *= 0.15;

  const std::int64_t max_dist = st.dist.max_entry();
  for (std::int64_t l = 0; l < config.num_blocks(); ++l) {
    const std::int64_t din = config.block_in(l);
    const std::int64_t dout = config.channels[l];
    const std::int64_t stride = config.strides[l];
    BlockState blk;
    blk.gc = BlockGCParams::init(config.variant, config.k, din, dout, st.skeleton, config.a_init,
                                 rng, config.bias);
    // The last layer of each residual branch starts at zero, so every block
    // begins as an identity map. Without normalization layers the trunk does
    // not survive the warmup learning rate otherwise.
    blk.gc.w.fill(0.0);
    if (config.topo_mode != EncodingMode::none) {
      blk.topo = TopoEncoding::make(max_dist, config.topo_mode == EncodingMode::feature_wise, din,
                                    config.topo_l2);
    }
    if (config.stat_mode != EncodingMode::none) {
      blk.stat = StatEncoding::init(config.stat_hidden,
                                    config.stat_mode == EncodingMode::feature_wise, din, rng);
    }
    if (config.temporal_enabled) {
      blk.tc = MSTCParams::init(dout, dout, stride, config.branches, rng);
      for (MSTCBranch& br : blk.tc.branches) {
        if (br.spec.kind == MSTCBranchKind::conv) {
          br.tw.fill(0.0);
        } else {
          br.rw.fill(0.0);
        }
      }
    }
    if (din != dout) {
      blk.res1_w = Tensor({dout, din, 1});
      blk.res1_b = Tensor({dout});
      conv_fill(blk.res1_w, blk.res1_b, din);
    }
    if (din != dout || stride != 1) {
      blk.res2_w = Tensor({dout, din, 1});
      blk.res2_b = Tensor({dout});
      conv_fill(blk.res2_w, blk.res2_b, din);
    }
    st.blocks.push_back(std::move(blk));
  }
  const std::int64_t dlast = config.channels.back();
  st.cls_w = Tensor({dlast, config.num_classes});
  st.cls_b = Tensor({config.num_classes});
  return st;
}

ModelState ModelState::zeros_like() const {
  ModelState z = *this;
  for (auto& [name, t] : z.named_tensors()) t->fill(0.0);
  return z;
}

std::vector<std::pair<std::string, Tensor*>> ModelState::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add = [&out](const std::string& name, Tensor& t) {
    if (t.size() > 0) out.emplace_back(name, &t);
  };
  add("stem.w", stem_w);
  add("stem.b", stem_b);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    BlockState& blk = blocks[l];
    add(p + "gc.a", blk.gc.a);
    add(p + "gc.w", blk.gc.w);
    add(p + "gc.bias", blk.gc.bias);
    add(p + "topo.table", blk.topo.table);
    add(p + "stat.w1", blk.stat.w1);
    add(p + "stat.b1", blk.stat.b1);
    add(p + "stat.w2", blk.stat.w2);
    add(p + "stat.b2", blk.stat.b2);
    for (std::size_t j = 0; j < blk.tc.branches.size(); ++j) {
      const std::string bp = p + "tc.branch" + std::to_string(j) + ".";
      add(bp + "rw", blk.tc.branches[j].rw);
      add(bp + "rb", blk.tc.branches[j].rb);
      add(bp + "tw", blk.tc.branches[j].tw);
      add(bp + "tb", blk.tc.branches[j].tb);
    }
    add(p + "res1.w", blk.res1_w);
    add(p + "res1.b", blk.res1_b);
    add(p + "res2.w", blk.res2_w);
    add(p + "res2.b", blk.res2_b);
  }
  add("cls.w", cls_w);
  add("cls.b", cls_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelState::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  auto list = const_cast<ModelState*>(this)->named_tensors();
  out.reserve(list.size());
  for (auto& [name, t] : list) out.emplace_back(name, t);
  return out;
}

std::int64_t model_param_count(const ModelState& state) {
  std::int64_t n = 0;
  for (const auto& [name, t] : state.named_tensors()) n += t->size();
  return n;
}

std::int64_t model_param_formula(const ModelConfig& config, std::int64_t v,
                                 std::int64_t max_distance) {
  const std::int64_t d0 = config.channels[0];
  std::int64_t n = 3 * d0 + d0;  // stem
  const std::int64_t nb = static_cast<std::int64_t>(config.branches.size());
  for (std::int64_t l = 0; l < config.num_blocks(); ++l) {
    const std::int64_t din = config.block_in(l);
    const std::int64_t dout = config.channels[l];
    n += config.k * v * v;
    n += blockgc_projection_params(config.variant, config.k, din, dout);
    if (config.bias) n += dout;
    if (config.topo_mode != EncodingMode::none) {
      n += (max_distance + 1) * (config.topo_mode == EncodingMode::feature_wise ? din : 1);
    }
    if (config.stat_mode != EncodingMode::none) {
      const std::int64_t dc = config.stat_mode == EncodingMode::feature_wise ? din : 1;
      n += 3 * config.stat_hidden + config.stat_hidden + config.stat_hidden * dc + dc;
    }
    if (config.temporal_enabled) {
      const std::int64_t base = dout / nb;
      for (std::int64_t j = 0; j < nb; ++j) {
        const std::int64_t cb = j == nb - 1 ? dout - base * (nb - 1) : base;
        n += cb * dout + cb;  // reduction
        if (config.branches[static_cast<std::size_t>(j)].kind == MSTCBranchKind::conv) {
          n += cb * cb * config.branches[static_cast<std::size_t>(j)].kernel + cb;
        }
      }
    }
    if (din != dout) n += din * dout + dout;                            // res1
    if (din != dout || config.strides[l] != 1) n += din * dout + dout;  // res2
  }
  n += config.channels.back() * config.num_classes + config.num_classes;  // classifier
  return n;
}

Tensor model_forward(const ModelState& state, const Tensor& seq, ForwardContext* ctx) {
  const ModelConfig& cfg = state.config;
  const std::int64_t v = state.skeleton.num_joints;
  if (seq.ndim() != 3 || seq.dim(0) != cfg.frames || seq.dim(1) != v || seq.dim(2) != 3) {
    throw ShapeError("model expects seq [" + std::to_string(cfg.frames) + "," +
                     std::to_string(v) + ",3], got " + seq.shape_str());
  }
  if (!seq.all_finite()) throw NumericError("input sequence contains non-finite values");
  const std::int64_t t0 = cfg.frames;
  Tensor x({3, t0, v});
  for (std::int64_t tt = 0; tt < t0; ++tt) {
    for (std::int64_t vv = 0; vv < v; ++vv) {
      for (std::int64_t c = 0; c < 3; ++c) {
        x[(c * t0 + tt) * v + vv] = seq[(tt * v + vv) * 3 + c];
      }
    }
  }
  Tensor rbar;
  if (cfg.stat_mode != EncodingMode::none) rbar = temporal_mean_relative(seq);
  Tensor h = conv1d_temporal(x, state.stem_w, state.stem_b, kOneByOne);
  if (ctx != nullptr) {
    ctx->x = x;
    ctx->rbar = rbar;
    ctx->blocks.clear();
    ctx->blocks.resize(state.blocks.size());
  }
  for (std::size_t l = 0; l < state.blocks.size(); ++l) {
    const BlockState& blk = state.blocks[l];
    const std::int64_t din = cfg.block_in(static_cast<std::int64_t>(l));
    const std::int64_t dout = cfg.channels[l];
    const std::int64_t stride = cfg.strides[l];
    ForwardContext::BlockTrace* trace = ctx != nullptr ? &ctx->blocks[l] : nullptr;

    Tensor b, c;
    StatActivations acts;
    if (cfg.topo_mode != EncodingMode::none) b = build_B(blk.topo, state.dist);
    if (cfg.stat_mode != EncodingMode::none) {
      c = build_C(blk.stat, rbar, trace != nullptr ? &acts : nullptr);
    }
    BlockGCSaved gc_saved;
    Tensor gcout = blockgc_forward(blk.gc, h, b, c, trace != nullptr ? &gc_saved : nullptr);
    Tensor s = std::move(gcout);
    if (din != dout) {
      add_inplace(s, conv1d_temporal(h, blk.res1_w, blk.res1_b, kOneByOne));
    } else {
      add_inplace(s, h);
    }
    MSTCSaved tc_saved;
    Tensor pre;
    if (cfg.temporal_enabled) {
      pre = mstc_forward(blk.tc, s, trace != nullptr ? &tc_saved : nullptr);
    } else {
      pre = s;
    }
    if (din != dout || stride != 1) {
      Conv1dSpec rs = kOneByOne;
      rs.stride = stride;
      add_inplace(pre, conv1d_temporal(h, blk.res2_w, blk.res2_b, rs));
    } else {
      add_inplace(pre, h);
    }
    Tensor out = relu(pre);
    if (trace != nullptr) {
      trace->input = std::move(h);
      trace->b = std::move(b);
      trace->c = std::move(c);
      trace->stat_acts = std::move(acts);
      trace->gc_saved = std::move(gc_saved);
      trace->s = std::move(s);
      trace->tc_saved = std::move(tc_saved);
      trace->pre_relu = std::move(pre);
    }
    h = std::move(out);
  }
  Tensor features = mean_pool_tv(h);
  const std::int64_t dlast = cfg.channels.back();
  Tensor logits({cfg.num_classes});
  for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
    double acc = state.cls_b[c];
    for (std::int64_t d = 0; d < dlast; ++d) acc += state.cls_w[d * cfg.num_classes + c] * features[d];
    logits[c] = acc;
  }
  if (ctx != nullptr) {
    ctx->features = std::move(features);
    ctx->logits = logits;
  }
  return logits;
}

void model_backward(const ModelState& state, const ForwardContext& ctx, const Tensor& g_logits,
                    ModelState& grads) {
  const ModelConfig& cfg = state.config;
  const std::int64_t v = state.skeleton.num_joints;
  const std::int64_t dlast = cfg.channels.back();
  if (g_logits.ndim() != 1 || g_logits.dim(0) != cfg.num_classes) {
    throw ShapeError("model_backward: bad logits grad shape " + g_logits.shape_str());
  }
  if (ctx.blocks.size() != state.blocks.size() || ctx.features.size() == 0) {
    throw ValueError("model_backward: forward context missing");
  }
  Tensor gfeat({dlast});
  for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
    const double g = g_logits[c];
    grads.cls_b[c] += g;
    for (std::int64_t d = 0; d < dlast; ++d) {
      grads.cls_w[d * cfg.num_classes + c] += ctx.features[d] * g;
      gfeat[d] += state.cls_w[d * cfg.num_classes + c] * g;
    }
  }
  const Tensor& last_pre = ctx.blocks.back().pre_relu;
  Tensor gh(last_pre.shape());
  {
    Tensor gpool(last_pre.shape());
    mean_pool_tv_backward(last_pre.shape(), gfeat, gpool);
    // ReLU of the last block sits between pre_relu and the pooled features.
    relu_backward(last_pre, gpool, gh);
  }
  for (std::int64_t l = static_cast<std::int64_t>(state.blocks.size()) - 1; l >= 0; --l) {
    const BlockState& blk = state.blocks[static_cast<std::size_t>(l)];
    BlockState& gblk = grads.blocks[static_cast<std::size_t>(l)];
    const ForwardContext::BlockTrace& trace = ctx.blocks[static_cast<std::size_t>(l)];
    const std::int64_t din = cfg.block_in(l);
    const std::int64_t dout = cfg.channels[static_cast<std::size_t>(l)];
    const std::int64_t stride = cfg.strides[static_cast<std::size_t>(l)];
    // gh currently holds the gradient at pre_relu (relu already unwound for
    // the last block; for earlier blocks it is applied at the bottom of this
    // loop before moving to the previous block).
    Tensor gx(trace.input.shape());
    if (din != dout || stride != 1) {
      Conv1dSpec rs = kOneByOne;
      rs.stride = stride;
      conv1d_temporal_backward(trace.input, blk.res2_w, rs, gh, gx, gblk.res2_w, gblk.res2_b);
    } else {
      add_inplace(gx, gh);
    }
    Tensor gs(trace.s.shape());
    if (cfg.temporal_enabled) {
      mstc_backward(blk.tc, trace.s, trace.tc_saved, gh, gblk.tc, gs);
    } else {
      add_inplace(gs, gh);
    }
    if (din != dout) {
      conv1d_temporal_backward(trace.input, blk.res1_w, kOneByOne, gs, gx, gblk.res1_w,
                               gblk.res1_b);
    } else {
      add_inplace(gx, gs);
    }
    Tensor gb, gc;
    if (trace.b.size() > 0) gb = Tensor(trace.b.shape());
    if (trace.c.size() > 0) gc = Tensor(trace.c.shape());
    blockgc_backward(blk.gc, trace.input, trace.b, trace.c, trace.gc_saved, gs, gblk.gc, gx,
                     trace.b.size() > 0 ? &gb : nullptr, trace.c.size() > 0 ? &gc : nullptr);
    if (trace.b.size() > 0) build_B_backward(blk.topo, state.dist, gb, gblk.topo.table);
    if (trace.c.size() > 0) {
      build_C_backward(blk.stat, ctx.rbar, trace.stat_acts, gc, gblk.stat.w1, gblk.stat.b1,
                       gblk.stat.w2, gblk.stat.b2);
    }
    if (l > 0) {
      const Tensor& prev_pre = ctx.blocks[static_cast<std::size_t>(l - 1)].pre_relu;
      gh = Tensor(prev_pre.shape());
      relu_backward(prev_pre, gx, gh);
    } else {
      Tensor gx0({3, cfg.frames, v});
      conv1d_temporal_backward(ctx.x, state.stem_w, kOneByOne, gx, gx0, grads.stem_w,
                               grads.stem_b);
    }
  }
}

namespace {

void accumulate_state(ModelState& total, ModelState& part) {
  auto dst = total.named_tensors();
  auto src = part.named_tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) add_inplace(*dst[i].second, *src[i].second);
}

}  // namespace

double model_loss_and_grads(const ModelState& state,
                            const std::vector<const SkeletonSequence*>& batch, ModelState& grads,
                            int threads, std::int64_t* correct) {
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  if (n == 0) throw ValueError("loss_and_grads: empty batch");
  const std::int64_t c = state.config.num_classes;
  std::vector<ForwardContext> ctxs(static_cast<std::size_t>(n));
  Tensor logits({n, c});
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));

  auto forward_range = [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const SkeletonSequence& s = *batch[static_cast<std::size_t>(i)];
      Tensor lg = model_forward(state, s.coords, &ctxs[static_cast<std::size_t>(i)]);
      for (std::int64_t j = 0; j < c; ++j) logits[i * c + j] = lg[j];
      labels[static_cast<std::size_t>(i)] = s.label;
    }
  };

  std::vector<ModelState> parts;
  parts.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) parts.push_back(grads.zeros_like());

  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (nthreads == 1) {
    forward_range(0, n);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < nthreads; ++w) {
      pool.emplace_back([&] {
        for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          forward_range(i, i + 1);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  Tensor glogits({n, c});
  const double loss = softmax_cross_entropy(logits, labels, &glogits);
  if (correct != nullptr) {
    std::int64_t ok = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < c; ++j) {
        if (logits[i * c + j] > logits[i * c + best]) best = j;
      }
      if (best == labels[static_cast<std::size_t>(i)]) ++ok;
    }
    *correct = ok;
  }

  auto backward_one = [&](std::int64_t i) {
    Tensor g({c});
    for (std::int64_t j = 0; j < c; ++j) g[j] = glogits[i * c + j];
    model_backward(state, ctxs[static_cast<std::size_t>(i)], g,
                   parts[static_cast<std::size_t>(i)]);
  };
  if (nthreads == 1) {
    for (std::int64_t i = 0; i < n; ++i) backward_one(i);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < nthreads; ++w) {
      pool.emplace_back([&] {
        for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) backward_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  // Summed in batch order regardless of which thread produced each part, so
  // gradient bits never depend on the thread count.
  for (std::int64_t i = 0; i < n; ++i) accumulate_state(grads, parts[static_cast<std::size_t>(i)]);
  return loss;
}

Prediction model_predict(const ModelState& state, const Tensor& seq) {
  Tensor logits = model_forward(state, seq);
  const std::int64_t c = logits.dim(0);
  Tensor probs = softmax_rows(logits.reshaped({1, c})).reshaped({c});
  Prediction pred;
  pred.probs = probs;
  pred.label = 0;
  for (std::int64_t j = 1; j < c; ++j) {
    if (probs[j] > probs[pred.label]) pred.label = j;
  }
  return pred;
}

}  // namespace blockgcn
