#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "blockgcn/data.hpp"
#include "blockgcn/model.hpp"
#include "blockgcn/training.hpp"

namespace blockgcn {

// Pearson correlation between two equal-sized tensors, flattened. Returns
// 0 when either side has zero variance.
double pearson(const Tensor& a, const Tensor& b);

// ||a - b||_F over all entries.
double frobenius_distance(const Tensor& a, const Tensor& b);

// One adjacency-initialization run of the forgetting probe.
struct ForgettingRun {
  AInit init = AInit::physical;
  double final_val_acc = 0.0;
  double best_val_acc = 0.0;
  // Per block: how far the learned adjacency moved and how it relates to the
  // normalized bone matrix before and after training.
  std::vector<double> frob_dev;
  std::vector<double> corr_init;
  std::vector<double> corr_final;
  std::vector<double> a_mean;
  std::vector<double> a_std;
};

struct ForgettingReport {
  std::vector<ForgettingRun> runs;
  double max_acc_gap = 0.0;  // max pairwise |final_val_acc_i - final_val_acc_j|
};

// Trains the same no-encoding baseline (vanilla blocks, K=1) once per
// adjacency init mode and collects accuracy plus adjacency statistics.
// Channels, strides and frames are taken from `base`; the variant, group
// count and encodings are forced off.
ForgettingReport run_forgetting_probe(const Dataset& data, const ModelConfig& base,
                                      const TrainConfig& train_config,
                                      const std::vector<AInit>& inits,
                                      std::ostream* log = nullptr);

// Baseline shape used by the probe by default: two vanilla blocks.
ModelConfig forgetting_baseline_config(const Dataset& data);

enum class FrameMode { mean, random };

// Collapses every sequence to a single frame: its temporal mean, or one
// frame drawn uniformly per sample (frozen by seed).
Dataset single_frame_dataset(const Dataset& data, FrameMode mode, std::uint64_t seed);

struct MeanFrameReport {
  double mean_frame_acc = 0.0;
  double random_frame_acc = 0.0;
  double chance = 0.0;
  bool degenerate = false;  // input had T == 1, both datasets coincide
};

// Trains one single-frame spatial-only classifier on temporally averaged
// frames and one on per-sample random frames; reports both validation
// accuracies next to chance level.
MeanFrameReport run_mean_frame_probe(const Dataset& data, const ModelConfig& base,
                                     const TrainConfig& train_config, std::uint64_t frame_seed,
                                     std::ostream* log = nullptr);

ModelConfig mean_frame_baseline_config(const Dataset& data);

std::string format_forgetting_report(const ForgettingReport& report);
std::string format_mean_frame_report(const MeanFrameReport& report);

}  // namespace blockgcn
