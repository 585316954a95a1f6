#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "blockgcn/data.hpp"
#include "blockgcn/model.hpp"
#include "blockgcn/tensor_ops.hpp"
#include "blockgcn/training.hpp"

using namespace blockgcn;

namespace {

Dataset tiny_dataset(std::uint64_t seed, std::int64_t per_class = 8) {
  const SynthSpec spec = SynthSpec::separable(3, 5, seed);
  Dataset d = generate_synthetic(spec, per_class, 8, seed);
  d.skeleton_name = "tiny5";
  return d;
}

TrainConfig short_config(std::int64_t epochs) {
  TrainConfig tc;
  tc.total_epochs = epochs;
  tc.warmup_epochs = std::min<std::int64_t>(2, epochs);
  tc.decay_epochs.clear();
  tc.batch_size = 8;
  return tc;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig tc;
  tc.base_lr = 0.1;
  tc.warmup_epochs = 5;
  tc.decay_epochs = {20, 25};
  tc.total_epochs = 30;

  CHECK(lr_at(tc, 0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(lr_at(tc, 4) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(tc, 19) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(tc, 20) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at(tc, 25) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(tc, 30), ValueError);
  CHECK_THROWS_AS(lr_at(tc, -1), ValueError);

  // Full-length schedule: 0.1 until 110, 0.01 until 120, then 0.001.
  const TrainConfig paper = TrainConfig::paper_schedule();
  CHECK(lr_at(paper, 5) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(paper, 109) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(paper, 110) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at(paper, 119) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(lr_at(paper, 120) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(paper, 125) == doctest::Approx(0.001).epsilon(1e-12));

  // Non-increasing after warmup, piecewise constant between decays.
  double prev = lr_at(paper, paper.warmup_epochs - 1);
  for (std::int64_t e = paper.warmup_epochs; e < paper.total_epochs; ++e) {
    const double cur = lr_at(paper, e);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("train config validation and round trip") {
  TrainConfig tc;
  tc.validate();

  TrainConfig bad = tc;
  bad.decay_epochs = {25, 20};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.decay_epochs = {20, 35};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.momentum = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.clip_grad_norm = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.warmup_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  TrainConfig full;
  full.base_lr = 0.05;
  full.decay_epochs = {3, 7};
  full.total_epochs = 9;
  full.warmup_epochs = 2;
  full.decay_encodings = false;
  full.augment_rotation = true;
  full.clip_grad_norm = 0.5;
  full.threads = 2;
  const TrainConfig back = TrainConfig::from_kv(full.to_kv());
  CHECK(back.to_kv() == full.to_kv());
  CHECK(back.decay_epochs == full.decay_epochs);
  CHECK(back.clip_grad_norm == 0.5);
  CHECK(back.decay_encodings == false);
}

TEST_CASE("sgd reduces to plain gradient descent without momentum") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 1);
  ModelState grads = state.zeros_like();
  ModelState velocity = state.zeros_like();
  TrainConfig tc;
  tc.momentum = 0.0;
  tc.weight_decay = 0.0;

  const double before = state.stem_w[0];
  for (auto& [name, t] : grads.named_tensors()) t->fill(0.25);
  sgd_step(state, grads, velocity, tc, 0.1);
  CHECK(state.stem_w[0] == doctest::Approx(before - 0.1 * 0.25).epsilon(1e-12));

  // Zero gradients with zero decay leave everything in place.
  ModelState frozen = ModelState::init(cfg, 1);
  ModelState none = frozen.zeros_like();
  ModelState vel2 = frozen.zeros_like();
  const ModelState copy = frozen;
  sgd_step(frozen, none, vel2, tc, 0.1);
  auto a = frozen.named_tensors();
  auto b = copy.named_tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(max_abs_diff(*a[i].second, *b[i].second) == 0.0);
  }
}

TEST_CASE("momentum trajectory matches the scalar recurrence") {
  // Drive one coordinate through f(p) = p^2/2 and replay the published
  // update rule g = grad + wd*p; v = mu*v + g; p -= lr*(g + mu*v) by hand.
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 2);
  ModelState grads = state.zeros_like();
  ModelState velocity = state.zeros_like();
  TrainConfig tc;
  tc.momentum = 0.9;
  tc.weight_decay = 0.0;
  const double lr = 0.1;

  state.cls_b[0] = 1.0;
  double p = 1.0, v = 0.0;
  for (int step = 0; step < 100; ++step) {
    grads.cls_b[0] = state.cls_b[0];
    sgd_step(state, grads, velocity, tc, lr);
    const double g = p;
    v = tc.momentum * v + g;
    p -= lr * (g + tc.momentum * v);
    REQUIRE(std::abs(state.cls_b[0] - p) <= 1e-10);
  }
  CHECK(std::abs(p) < 1.0);  // the bowl actually contracts

  // Weight decay enters through the gradient, not a separate shrink.
  ModelState wd_state = ModelState::init(cfg, 2);
  ModelState wd_grads = wd_state.zeros_like();
  ModelState wd_vel = wd_state.zeros_like();
  TrainConfig wd_tc;
  wd_tc.momentum = 0.0;
  wd_tc.weight_decay = 0.01;
  wd_state.cls_b[0] = 2.0;
  sgd_step(wd_state, wd_grads, wd_vel, wd_tc, 0.1);
  CHECK(wd_state.cls_b[0] == doctest::Approx(2.0 - 0.1 * (0.01 * 2.0)).epsilon(1e-12));
}

TEST_CASE("encoding parameters can be exempted from weight decay") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 3);
  state.blocks[0].topo.table.fill(0.5);
  state.blocks[0].stat.b2.fill(0.25);
  ModelState grads = state.zeros_like();
  ModelState velocity = state.zeros_like();
  TrainConfig tc;
  tc.momentum = 0.0;
  tc.weight_decay = 0.1;
  tc.decay_encodings = false;

  const double cls_before = state.cls_w[0];
  state.cls_w[0] = 1.0;
  sgd_step(state, grads, velocity, tc, 0.1);
  CHECK(state.blocks[0].topo.table[0] == 0.5);
  CHECK(state.blocks[0].stat.b2[0] == 0.25);
  CHECK(state.cls_w[0] != 1.0);  // everything else still decays
  state.cls_w[0] = cls_before;

  TrainConfig on = tc;
  on.decay_encodings = true;
  sgd_step(state, grads, velocity, on, 0.1);
  CHECK(state.blocks[0].topo.table[0] != 0.5);
}

TEST_CASE("one small step on a frozen batch lowers the loss") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 4);
  const Dataset data = tiny_dataset(4);
  std::vector<const SkeletonSequence*> batch;
  for (std::size_t i = 0; i < 6; ++i) batch.push_back(&data.train[i]);

  ModelState grads = state.zeros_like();
  ModelState velocity = state.zeros_like();
  const double before = model_loss_and_grads(state, batch, grads);
  TrainConfig tc;
  tc.weight_decay = 0.0;
  sgd_step(state, grads, velocity, tc, 1e-4);
  ModelState scratch = state.zeros_like();
  const double after = model_loss_and_grads(state, batch, scratch);
  CHECK(after < before);
}

TEST_CASE("training runs deterministically") {
  const Dataset data = tiny_dataset(5, 10);
  const ModelConfig cfg = ModelConfig::tiny();
  const TrainConfig tc = short_config(3);

  ModelState s1 = ModelState::init(cfg, tc.seed);
  ModelState s2 = ModelState::init(cfg, tc.seed);
  const TrainResult r1 = train(s1, data, tc);
  const TrainResult r2 = train(s2, data, tc);

  REQUIRE(r1.history.size() == 3);
  REQUIRE(r2.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
    CHECK(r1.history[e].train_acc == r2.history[e].train_acc);
    CHECK(r1.history[e].val_acc == r2.history[e].val_acc);
  }
  auto t1 = s1.named_tensors();
  auto t2 = s2.named_tensors();
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(max_abs_diff(*t1[i].second, *t2[i].second) == 0.0);
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.best_val_acc == r2.best_val_acc);

  // The recorded history is well-formed csv.
  const std::string csv = history_to_csv(r1.history);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "epoch, lr, train_loss, train_acc, val_acc");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("gradient clipping changes large steps only") {
  const Dataset data = tiny_dataset(6, 10);
  const ModelConfig cfg = ModelConfig::tiny();

  TrainConfig loose = short_config(2);
  loose.clip_grad_norm = 0.0;
  TrainConfig huge = short_config(2);
  huge.clip_grad_norm = 1e9;

  ModelState a = ModelState::init(cfg, 1);
  ModelState b = ModelState::init(cfg, 1);
  train(a, data, loose);
  train(b, data, huge);
  auto ta = a.named_tensors();
  auto tb = b.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(max_abs_diff(*ta[i].second, *tb[i].second) == 0.0);
  }

  TrainConfig tight = short_config(2);
  tight.clip_grad_norm = 1e-3;
  ModelState c = ModelState::init(cfg, 1);
  train(c, data, tight);
  auto tc_named = c.named_tensors();
  double moved = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    moved = std::max(moved, max_abs_diff(*ta[i].second, *tc_named[i].second));
  }
  CHECK(moved > 0.0);
}

TEST_CASE("evaluation counts argmax hits") {
  const Dataset data = tiny_dataset(7, 10);
  const ModelConfig cfg = ModelConfig::tiny();
  ModelState state = ModelState::init(cfg, 8);
  const double acc = evaluate_accuracy(state, data.val);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  // A zero-initialized head always predicts class 0.
  std::int64_t zeros = 0;
  for (const auto& s : data.val) zeros += s.label == 0 ? 1 : 0;
  CHECK(acc == doctest::Approx(static_cast<double>(zeros) /
                               static_cast<double>(data.val.size())));
}

TEST_CASE("score fusion averages probability streams") {
  const Tensor p1 = Tensor::from_data({2}, {0.6, 0.4});
  const Tensor p2 = Tensor::from_data({2}, {0.2, 0.8});
  const Prediction fused = ensemble_probs({p1, p2});
  CHECK(fused.probs[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(fused.probs[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(fused.label == 1);

  // Identical streams collapse to themselves, a single stream is identity.
  const Prediction same = ensemble_probs({p1, p1, p1, p1});
  CHECK(max_abs_diff(same.probs, p1) == 0.0);
  CHECK(same.label == 0);
  const Prediction one = ensemble_probs({p2});
  CHECK(max_abs_diff(one.probs, p2) == 0.0);

  CHECK_THROWS_AS(ensemble_probs({}), ValueError);
  const Tensor mismatched = Tensor::from_data({3}, {0.2, 0.3, 0.5});
  CHECK_THROWS_AS(ensemble_probs({p1, mismatched}), ShapeError);

  const Tensor l1 = Tensor::from_data({2}, {3.0, 1.0});
  const Tensor l2 = Tensor::from_data({2}, {-1.0, 9.0});
  const Prediction logits = ensemble_logits({l1, l2});
  CHECK(logits.label == 1);
}
