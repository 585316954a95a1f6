#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "blockgcn/data.hpp"
#include "blockgcn/model.hpp"

namespace blockgcn {

struct TrainConfig {
  double base_lr = 0.1;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 4e-4;
  std::int64_t warmup_epochs = 5;
  std::vector<std::int64_t> decay_epochs = {20, 25};
  double decay_factor = 0.1;
  std::int64_t batch_size = 32;
  std::int64_t total_epochs = 30;
  std::uint64_t seed = 1;
  int threads = 1;
  // Whether weight decay also pulls on encoding parameters (tables and MLPs).
  bool decay_encodings = true;
  bool augment_rotation = false;
  double rotation_max_angle = 0.3;
  // Global-norm gradient clipping applied before each step; 0 disables. With
  // no normalization layers in the network, the full learning rate can
  // otherwise amplify one bad batch into a runaway within a few steps.
  double clip_grad_norm = 1.0;

  // Paper-scale schedule: 140 epochs with decays at 110 and 120.
  static TrainConfig paper_schedule();

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Linear warmup to base_lr over warmup_epochs, then a factor-of-10 drop at
// each decay epoch.
double lr_at(const TrainConfig& config, std::int64_t epoch);

// Nesterov momentum step with L2 weight decay folded into the gradient:
//   g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v).
// Parameter names containing ".topo." or ".stat." skip weight decay when
// decay_encodings is false.
void sgd_step(ModelState& params, ModelState& grads, ModelState& velocity,
              const TrainConfig& config, double lr);

struct EpochStats {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::int64_t best_epoch = -1;
  double best_val_acc = 0.0;
  ModelState best_state;
};

// Full loop: shuffled mini-batches, per-epoch validation, best-epoch state
// kept by validation accuracy. Deterministic for a fixed config and seed.
TrainResult train(ModelState& state, const Dataset& data, const TrainConfig& config,
                  std::ostream* log = nullptr);

double evaluate_accuracy(const ModelState& state, const std::vector<SkeletonSequence>& seqs,
                         int threads = 1);

// `epoch, lr, train_loss, train_acc, val_acc` rows.
std::string history_to_csv(const std::vector<EpochStats>& history);

// Unweighted mean of probability vectors (summed pairwise, so fusing
// identical streams is exact), then argmax.
Prediction ensemble_probs(const std::vector<Tensor>& probs);
// Same fusion applied to raw logit vectors for comparison runs.
Prediction ensemble_logits(const std::vector<Tensor>& logits);

}  // namespace blockgcn
