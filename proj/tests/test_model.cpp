#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <vector>

#include "blockgcn/checkpoint.hpp"
#include "blockgcn/data.hpp"
#include "blockgcn/model.hpp"
#include "blockgcn/rng.hpp"
#include "blockgcn/tensor_ops.hpp"

using namespace blockgcn;

namespace {

Tensor random_seq(const ModelConfig& cfg, std::uint64_t seed) {
  const Skeleton s = preset(cfg.skeleton);
  Tensor seq({cfg.frames, s.num_joints, 3});
  Rng rng(seed);
  for (std::int64_t i = 0; i < seq.size(); ++i) seq[i] = rng.uniform(-1, 1);
  return seq;
}

}  // namespace

TEST_CASE("logits shape and determinism") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelState state = ModelState::init(cfg, 5);
  const Tensor seq = random_seq(cfg, 9);
  const Tensor l1 = model_forward(state, seq);
  const Tensor l2 = model_forward(state, seq);
  CHECK(l1.ndim() == 1);
  CHECK(l1.dim(0) == cfg.num_classes);
  CHECK(max_abs_diff(l1, l2) == 0.0);

  const ModelState again = ModelState::init(cfg, 5);
  CHECK(max_abs_diff(model_forward(again, seq), l1) == 0.0);

  Tensor bad({cfg.frames, 4, 3});
  CHECK_THROWS_AS(model_forward(state, bad), ShapeError);
  Tensor nan = seq;
  nan[0] = std::nan("");
  CHECK_THROWS_AS(model_forward(state, nan), NumericError);
}

TEST_CASE("forward matches a hand-composed pipeline of the module calls") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 21);
  // Shift zero-started tensors so every term participates.
  Rng jrng(77);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] += jrng.uniform(-0.2, 0.2);
  }
  const Tensor seq = random_seq(cfg, 22);
  const std::int64_t t0 = cfg.frames, v = state.skeleton.num_joints;

  Tensor x({3, t0, v});
  for (std::int64_t tt = 0; tt < t0; ++tt) {
    for (std::int64_t vv = 0; vv < v; ++vv) {
      for (std::int64_t c = 0; c < 3; ++c) {
        x[(c * t0 + tt) * v + vv] = seq[(tt * v + vv) * 3 + c];
      }
    }
  }
  const Tensor rbar = temporal_mean_relative(seq);
  Tensor h = conv1d_temporal(x, state.stem_w, state.stem_b, Conv1dSpec{});
  for (const BlockState& blk : state.blocks) {
    const Tensor b = build_B(blk.topo, state.dist);
    const Tensor c = build_C(blk.stat, rbar);
    Tensor s = blockgc_forward(blk.gc, h, b, c);
    add_inplace(s, h);  // tiny config keeps Din == Dout at stride 1
    Tensor pre = mstc_forward(blk.tc, s);
    add_inplace(pre, h);
    h = relu(pre);
  }
  const Tensor features = mean_pool_tv(h);
  Tensor want({cfg.num_classes});
  for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
    double acc = state.cls_b[c];
    for (std::int64_t d = 0; d < cfg.channels.back(); ++d) {
      acc += state.cls_w[d * cfg.num_classes + c] * features[d];
    }
    want[c] = acc;
  }

  const Tensor got = model_forward(state, seq);
  CHECK(max_abs_diff(got, want) <= 1e-12);
}

TEST_CASE("zeroed blocks reduce the network to relu of the stem") {
  const ModelConfig cfg = ModelConfig::tiny();  // equal widths, stride 1
  ModelState state = ModelState::init(cfg, 3);
  for (BlockState& blk : state.blocks) {
    blk.gc.a.fill(0.0);
    blk.gc.w.fill(0.0);
    blk.gc.bias.fill(0.0);
    blk.topo.table.fill(0.0);
    blk.stat.w1.fill(0.0);
    blk.stat.b1.fill(0.0);
    blk.stat.w2.fill(0.0);
    blk.stat.b2.fill(0.0);
    for (MSTCBranch& br : blk.tc.branches) {
      br.rw.fill(0.0);
      br.rb.fill(0.0);
      if (br.spec.kind == MSTCBranchKind::conv) {
        br.tw.fill(0.0);
        br.tb.fill(0.0);
      }
    }
  }
  const Tensor seq = random_seq(cfg, 4);
  ForwardContext ctx;
  model_forward(state, seq, &ctx);

  const Tensor stem = conv1d_temporal(ctx.x, state.stem_w, state.stem_b, Conv1dSpec{});
  const Tensor want = mean_pool_tv(relu(stem));
  CHECK(max_abs_diff(ctx.features, want) <= 1e-12);
}

TEST_CASE("fresh model starts at chance loss") {
  for (const ModelConfig& cfg : {ModelConfig::tiny(), ModelConfig::desk()}) {
    const ModelState state = ModelState::init(cfg, 1);
    // The classifier head starts at zero, so logits are exactly zero.
    for (std::int64_t i = 0; i < state.cls_w.size(); ++i) CHECK(state.cls_w[i] == 0.0);
    for (std::int64_t i = 0; i < state.cls_b.size(); ++i) CHECK(state.cls_b[i] == 0.0);

    const Tensor seq = random_seq(cfg, 2);
    const Tensor logits = model_forward(state, seq);
    for (std::int64_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);

    SkeletonSequence sample;
    sample.coords = seq;
    sample.label = 0;
    ModelState grads = state.zeros_like();
    const double loss = model_loss_and_grads(state, {&sample}, grads);
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(cfg.num_classes)))
                      .epsilon(1e-12));
  }
}

TEST_CASE("duplicating a sample does not change the mean gradient") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelState state = ModelState::init(cfg, 11);
  SkeletonSequence sample;
  sample.coords = random_seq(cfg, 12);
  sample.label = 1;

  ModelState g1 = state.zeros_like();
  const double l1 = model_loss_and_grads(state, {&sample}, g1);
  ModelState g3 = state.zeros_like();
  const double l3 = model_loss_and_grads(state, {&sample, &sample, &sample}, g3);
  CHECK(l1 == doctest::Approx(l3).epsilon(1e-12));

  auto t1 = g1.named_tensors();
  auto t3 = g3.named_tensors();
  REQUIRE(t1.size() == t3.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(max_abs_diff(*t1[i].second, *t3[i].second) <= 1e-12);
  }

  CHECK_THROWS_AS(model_loss_and_grads(state, {}, g1), ValueError);
}

TEST_CASE("per-sample gradients sum identically across thread counts") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 31);
  Rng jrng(32);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] += jrng.uniform(-0.1, 0.1);
  }
  std::vector<SkeletonSequence> samples;
  for (int i = 0; i < 5; ++i) {
    SkeletonSequence s;
    s.coords = random_seq(cfg, 100 + static_cast<std::uint64_t>(i));
    s.label = i % cfg.num_classes;
    samples.push_back(std::move(s));
  }
  std::vector<const SkeletonSequence*> batch;
  for (const auto& s : samples) batch.push_back(&s);

  ModelState g1 = state.zeros_like();
  ModelState g3 = state.zeros_like();
  std::int64_t c1 = 0, c3 = 0;
  const double l1 = model_loss_and_grads(state, batch, g1, 1, &c1);
  const double l3 = model_loss_and_grads(state, batch, g3, 3, &c3);
  CHECK(l1 == l3);
  CHECK(c1 == c3);
  auto t1 = g1.named_tensors();
  auto t3 = g3.named_tensors();
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(max_abs_diff(*t1[i].second, *t3[i].second) == 0.0);
  }
}

TEST_CASE("prediction is a softmax argmax") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 41);
  Rng jrng(42);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] += jrng.uniform(-0.3, 0.3);
  }
  const Tensor seq = random_seq(cfg, 43);
  const Prediction pred = model_predict(state, seq);
  double sum = 0.0;
  for (std::int64_t i = 0; i < pred.probs.size(); ++i) sum += pred.probs[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const Tensor logits = model_forward(state, seq);
  std::int64_t argmax = 0;
  double denom = 0.0;
  for (std::int64_t i = 0; i < logits.size(); ++i) {
    if (logits[i] > logits[argmax]) argmax = i;
    denom += std::exp(logits[i]);
  }
  CHECK(pred.label == argmax);
  for (std::int64_t i = 0; i < logits.size(); ++i) {
    CHECK(pred.probs[i] == doctest::Approx(std::exp(logits[i]) / denom).epsilon(1e-9));
  }
}

TEST_CASE("frame order does not matter without temporal mixing") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.branches = {MSTCBranchSpec{MSTCBranchKind::none, 1, 1}};
  ModelState state = ModelState::init(cfg, 51);
  Rng jrng(52);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] += jrng.uniform(-0.2, 0.2);
  }
  const Tensor seq = random_seq(cfg, 53);
  const std::int64_t v = state.skeleton.num_joints;

  std::vector<std::int64_t> perm(static_cast<std::size_t>(cfg.frames));
  std::iota(perm.begin(), perm.end(), 0);
  Rng prng(54);
  prng.shuffle(perm);
  Tensor shuffled(seq.shape());
  for (std::int64_t tt = 0; tt < cfg.frames; ++tt) {
    for (std::int64_t i = 0; i < v * 3; ++i) {
      shuffled[tt * v * 3 + i] = seq[perm[static_cast<std::size_t>(tt)] * v * 3 + i];
    }
  }
  const Tensor a = model_forward(state, seq);
  const Tensor b = model_forward(state, shuffled);
  CHECK(max_abs_diff(a, b) <= 1e-9);
}

TEST_CASE("every trainable tensor is listed exactly once") {
  for (const ModelConfig& cfg : {ModelConfig::tiny(), ModelConfig::desk()}) {
    ModelState state = ModelState::init(cfg, 61);
    auto named = state.named_tensors();
    std::set<std::string> names;
    std::set<const Tensor*> ptrs;
    std::int64_t total = 0;
    for (const auto& [name, t] : named) {
      CHECK(names.insert(name).second);
      CHECK(ptrs.insert(t).second);
      total += t->size();
    }
    CHECK(total == model_param_count(state));

    const auto& cstate = state;
    CHECK(cstate.named_tensors().size() == named.size());
  }
}

TEST_CASE("closed-form parameter count matches the built model") {
  std::vector<ModelConfig> cfgs;
  cfgs.push_back(ModelConfig::tiny());
  cfgs.push_back(ModelConfig::desk());
  {
    ModelConfig c = ModelConfig::desk();
    c.variant = GCVariant::vanilla;
    c.k = 1;
    cfgs.push_back(c);
  }
  {
    ModelConfig c = ModelConfig::desk();
    c.variant = GCVariant::decoupling;
    cfgs.push_back(c);
  }
  {
    ModelConfig c = ModelConfig::tiny();
    c.topo_mode = EncodingMode::feature_wise;
    c.stat_mode = EncodingMode::shared;
    cfgs.push_back(c);
  }
  {
    ModelConfig c = ModelConfig::tiny();
    c.topo_mode = EncodingMode::none;
    c.stat_mode = EncodingMode::none;
    c.temporal_enabled = false;
    c.bias = false;
    cfgs.push_back(c);
  }
  {
    ModelConfig c = ModelConfig::desk();
    c.strides = {1, 2, 2, 1};
    c.channels = {16, 32, 32, 64};
    cfgs.push_back(c);
  }
  for (const ModelConfig& cfg : cfgs) {
    cfg.validate();
    const ModelState state = ModelState::init(cfg, 71);
    CHECK(model_param_formula(cfg, state.skeleton.num_joints, state.dist.max_entry()) ==
          model_param_count(state));
  }
}

TEST_CASE("grouping removes exactly the expected projection parameters") {
  const ModelConfig desk = ModelConfig::desk();
  std::int64_t vanilla_proj = 0, block_proj = 0, dense = 0;
  for (std::int64_t l = 0; l < desk.num_blocks(); ++l) {
    const std::int64_t din = desk.block_in(l), dout = desk.channels[l];
    vanilla_proj += blockgc_projection_params(GCVariant::vanilla, 1, din, dout);
    block_proj += blockgc_projection_params(GCVariant::block, desk.k, din, dout);
    dense += din * dout;
  }
  CHECK(vanilla_proj == dense);
  CHECK(vanilla_proj - block_proj == dense - dense / desk.k);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 81);
  Rng jrng(82);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] += jrng.uniform(-0.2, 0.2);
  }
  const std::string path = "model_roundtrip.ckpt";
  save_checkpoint(path, state, Modality::bone);
  Modality m = Modality::joint;
  ModelState back = load_checkpoint(path, &m);
  std::remove(path.c_str());
  CHECK(m == Modality::bone);

  auto a = state.named_tensors();
  auto b = back.named_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(max_abs_diff(*a[i].second, *b[i].second) == 0.0);
  }

  const Tensor seq = random_seq(cfg, 83);
  CHECK(max_abs_diff(model_forward(state, seq), model_forward(back, seq)) == 0.0);
}

TEST_CASE("config round trips through key=value form") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.k = 2;
  cfg.topo_mode = EncodingMode::feature_wise;
  cfg.topo_distance = DistanceKind::level_difference;
  cfg.branches = {MSTCBranchSpec{MSTCBranchKind::conv, 3, 1},
                  MSTCBranchSpec{MSTCBranchKind::pool, 3, 1},
                  MSTCBranchSpec{MSTCBranchKind::none, 1, 1}};
  const ModelConfig back = ModelConfig::from_kv(cfg.to_kv());
  CHECK(back.to_kv() == cfg.to_kv());
  CHECK(back.k == 2);
  CHECK(back.topo_distance == DistanceKind::level_difference);
  CHECK(back.branches.size() == 3);
  CHECK(back.branches[1].kind == MSTCBranchKind::pool);
}

TEST_CASE("config validation rejects inconsistent settings") {
  ModelConfig bad = ModelConfig::desk();
  bad.k = 3;  // does not divide 16
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig neg = ModelConfig::desk();
  neg.frames = 0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);

  ModelConfig mismatched = ModelConfig::desk();
  mismatched.strides = {1, 1};
  CHECK_THROWS_AS(mismatched.validate(), ConfigError);
}
