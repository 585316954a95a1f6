#include "blockgcn/probes.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "blockgcn/error.hpp"
#include "blockgcn/skeleton.hpp"

namespace blockgcn {

double pearson(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("pearson: size mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  const std::int64_t n = a.size();
  if (n == 0) throw ValueError("pearson: empty tensors");
  double ma = 0.0, mb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

double frobenius_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("frobenius_distance: size mismatch");
  }
  double sum = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

namespace {

void a_stats(const Tensor& a, double* mean, double* sd) {
  const std::int64_t n = a.size();
  double m = 0.0;
  for (std::int64_t i = 0; i < n; ++i) m += a[i];
  m /= static_cast<double>(n);
  double v = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = a[i] - m;
    v += d * d;
  }
  *mean = m;
  *sd = std::sqrt(v / static_cast<double>(n));
}

}  // namespace

ModelConfig forgetting_baseline_config(const Dataset& data) {
  ModelConfig c;
  c.skeleton = data.skeleton_name;
  c.num_classes = data.num_classes;
  c.frames = data.frames;
  c.variant = GCVariant::vanilla;
  c.k = 1;
  c.channels = {16, 32};
  c.strides = {1, 2};
  c.topo_mode = EncodingMode::none;
  c.stat_mode = EncodingMode::none;
  return c;
}

ForgettingReport run_forgetting_probe(const Dataset& data, const ModelConfig& base,
                                      const TrainConfig& train_config,
                                      const std::vector<AInit>& inits, std::ostream* log) {
  if (inits.size() < 2) {
    throw ValueError("forgetting probe: need at least two adjacency init modes");
  }
  ModelConfig config = base;
  config.variant = GCVariant::vanilla;
  config.k = 1;
  config.topo_mode = EncodingMode::none;
  config.stat_mode = EncodingMode::none;

  ForgettingReport report;
  for (AInit init : inits) {
    config.a_init = init;
    config.validate();
    ModelState state = ModelState::init(config, train_config.seed);
    const Tensor bone = bone_adjacency(state.skeleton, true);
    std::vector<Tensor> a_at_init;
    for (const BlockState& blk : state.blocks) a_at_init.push_back(blk.gc.a);

    ForgettingRun run;
    run.init = init;
    for (const Tensor& a0 : a_at_init) run.corr_init.push_back(pearson(a0, bone));

    if (log != nullptr) (*log) << "== adjacency init: " << to_string(init) << "\n";
    TrainResult result = train(state, data, train_config, log);
    run.final_val_acc = result.history.back().val_acc;
    run.best_val_acc = result.best_val_acc;
    for (std::size_t l = 0; l < state.blocks.size(); ++l) {
      const Tensor& a = state.blocks[l].gc.a;
      run.frob_dev.push_back(frobenius_distance(a, a_at_init[l]));
      run.corr_final.push_back(pearson(a, bone));
      double m = 0.0, sd = 0.0;
      a_stats(a, &m, &sd);
      run.a_mean.push_back(m);
      run.a_std.push_back(sd);
    }
    report.runs.push_back(std::move(run));
  }
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    for (std::size_t j = i + 1; j < report.runs.size(); ++j) {
      const double gap =
          std::abs(report.runs[i].final_val_acc - report.runs[j].final_val_acc);
      if (gap > report.max_acc_gap) report.max_acc_gap = gap;
    }
  }
  return report;
}

Dataset single_frame_dataset(const Dataset& data, FrameMode mode, std::uint64_t seed) {
  Rng rng(seed);
  auto collapse = [&](const std::vector<SkeletonSequence>& in) {
    std::vector<SkeletonSequence> out;
    out.reserve(in.size());
    for (const SkeletonSequence& seq : in) {
      const std::int64_t t = seq.frames();
      const std::int64_t v = seq.joints();
      SkeletonSequence one;
      one.label = seq.label;
      one.coords = Tensor({1, v, 3});
      if (mode == FrameMode::mean) {
        for (std::int64_t j = 0; j < v * 3; ++j) {
          double sum = 0.0;
          for (std::int64_t f = 0; f < t; ++f) sum += seq.coords[f * v * 3 + j];
          one.coords[j] = sum / static_cast<double>(t);
        }
      } else {
        const std::int64_t f = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(t)));
        for (std::int64_t j = 0; j < v * 3; ++j) one.coords[j] = seq.coords[f * v * 3 + j];
      }
      out.push_back(std::move(one));
    }
    return out;
  };
  Dataset out;
  out.train = collapse(data.train);
  out.val = collapse(data.val);
  out.num_classes = data.num_classes;
  out.frames = 1;
  out.joints = data.joints;
  out.skeleton_name = data.skeleton_name;
  return out;
}

ModelConfig mean_frame_baseline_config(const Dataset& data) {
  ModelConfig c;
  c.skeleton = data.skeleton_name;
  c.num_classes = data.num_classes;
  c.frames = 1;
  c.variant = GCVariant::block;
  c.k = 4;
  c.channels = {16, 32};
  c.strides = {1, 1};
  c.stat_hidden = 32;
  c.temporal_enabled = false;
  return c;
}

MeanFrameReport run_mean_frame_probe(const Dataset& data, const ModelConfig& base,
                                     const TrainConfig& train_config, std::uint64_t frame_seed,
                                     std::ostream* log) {
  MeanFrameReport report;
  report.chance = 1.0 / static_cast<double>(data.num_classes);
  report.degenerate = data.frames == 1;

  ModelConfig config = base;
  config.frames = 1;
  config.temporal_enabled = false;
  config.strides.assign(config.channels.size(), 1);
  config.validate();

  const Dataset mean_data = single_frame_dataset(data, FrameMode::mean, frame_seed);
  const Dataset random_data = single_frame_dataset(data, FrameMode::random, frame_seed);

  if (log != nullptr) (*log) << "== mean-frame classifier\n";
  ModelState mean_state = ModelState::init(config, train_config.seed);
  TrainResult mean_result = train(mean_state, mean_data, train_config, log);
  report.mean_frame_acc = mean_result.history.back().val_acc;

  if (log != nullptr) (*log) << "== random-frame classifier\n";
  ModelState random_state = ModelState::init(config, train_config.seed);
  TrainResult random_result = train(random_state, random_data, train_config, log);
  report.random_frame_acc = random_result.history.back().val_acc;
  return report;
}

std::string format_forgetting_report(const ForgettingReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << "init            final_val  best_val\n";
  for (const ForgettingRun& run : report.runs) {
    os << to_string(run.init);
    for (std::size_t p = to_string(run.init).size(); p < 16; ++p) os << ' ';
    os << run.final_val_acc << "  " << run.best_val_acc << "\n";
  }
  os << "max_acc_gap " << report.max_acc_gap << "\n";
  for (const ForgettingRun& run : report.runs) {
    for (std::size_t l = 0; l < run.frob_dev.size(); ++l) {
      os << to_string(run.init) << " block" << l << " frob_dev " << run.frob_dev[l]
         << " corr_init " << run.corr_init[l] << " corr_final " << run.corr_final[l]
         << " a_mean " << run.a_mean[l] << " a_std " << run.a_std[l] << "\n";
    }
  }
  return os.str();
}

std::string format_mean_frame_report(const MeanFrameReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << "mean_frame_acc " << report.mean_frame_acc << "\n";
  os << "random_frame_acc " << report.random_frame_acc << "\n";
  os << "chance " << report.chance << "\n";
  if (report.degenerate) {
    os << "warning: input sequences have a single frame, both classifiers saw the same data\n";
  }
  return os.str();
}

}  // namespace blockgcn
