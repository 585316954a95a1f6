#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "blockgcn/checkpoint.hpp"
#include "blockgcn/config.hpp"
#include "blockgcn/data.hpp"
#include "blockgcn/error.hpp"
#include "blockgcn/gradcheck.hpp"
#include "blockgcn/model.hpp"
#include "blockgcn/probes.hpp"
#include "blockgcn/tensor_ops.hpp"
#include "blockgcn/training.hpp"

namespace {

using namespace blockgcn;

int default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// --config accepts a preset name (tiny/desk/paper) or a key=value file path.
std::map<std::string, std::string> resolve_config_kv(const std::string& arg) {
  if (arg.empty()) return {};
  if (arg == "tiny") return ModelConfig::tiny().to_kv();
  if (arg == "desk") return ModelConfig::desk().to_kv();
  if (arg == "paper") return ModelConfig::paper().to_kv();
  if (!std::filesystem::exists(arg)) {
    throw ConfigError("--config: not a preset name (tiny/desk/paper) and no such file: " + arg);
  }
  return parse_kv_file(arg);
}

void split_config_kv(const std::map<std::string, std::string>& kv,
                     std::map<std::string, std::string>& model_kv,
                     std::map<std::string, std::string>& train_kv) {
  for (const auto& [key, value] : kv) {
    if (key.rfind("train.", 0) == 0) {
      train_kv[key] = value;
    } else {
      model_kv[key] = value;
    }
  }
}

void print_header(std::ostream& os, const ModelConfig& mc, const TrainConfig* tc,
                  const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  for (const auto& [key, value] : mc.to_kv()) os << "# " << key << " = " << value << "\n";
  if (tc != nullptr) {
    for (const auto& [key, value] : tc->to_kv()) os << "# " << key << " = " << value << "\n";
  }
  for (const auto& [key, value] : extra) os << "# " << key << " = " << value << "\n";
}

struct GenDataOptions {
  std::string out;
  std::string kind = "separable";
  std::string skeleton = "ntu25";
  std::int64_t classes = 4;
  std::int64_t frames = 16;
  std::int64_t per_class = 200;
  std::uint64_t seed = 1;
};

int run_gen_data(const GenDataOptions& o) {
  const Skeleton sk = preset(o.skeleton);
  SynthSpec spec;
  if (o.kind == "separable") {
    spec = SynthSpec::separable(o.classes, sk.num_joints, o.seed);
  } else if (o.kind == "degenerate") {
    spec = SynthSpec::degenerate(o.classes, sk.num_joints, o.seed);
  } else {
    throw ConfigError("--kind must be separable or degenerate, got: " + o.kind);
  }
  Dataset data = generate_synthetic(spec, o.per_class, o.frames, o.seed);
  data.skeleton_name = o.skeleton;
  save_dataset(o.out, data);
  std::cout << "kind " << o.kind << "\n"
            << "out " << o.out << "\n"
            << "classes " << data.num_classes << "\n"
            << "frames " << data.frames << "\n"
            << "joints " << data.joints << "\n"
            << "train " << data.train.size() << "\n"
            << "val " << data.val.size() << "\n";
  return 0;
}

struct TrainOptions {
  std::string data_dir;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  std::string modality = "joint";
  std::string history;
  int threads = default_threads();
  bool save_best = false;
  bool quiet = false;
};

int run_train(const TrainOptions& o) {
  Dataset data = load_dataset(o.data_dir);
  const Modality modality = modality_from_string(o.modality);

  std::map<std::string, std::string> kv;
  kv["skeleton"] = data.skeleton_name;
  kv["num_classes"] = std::to_string(data.num_classes);
  kv["frames"] = std::to_string(data.frames);
  for (const auto& [key, value] : resolve_config_kv(o.config)) kv[key] = value;
  apply_overrides(kv, o.sets);
  std::map<std::string, std::string> model_kv, train_kv;
  split_config_kv(kv, model_kv, train_kv);
  const ModelConfig mc = ModelConfig::from_kv(model_kv);
  TrainConfig tc = TrainConfig::from_kv(train_kv);
  if (train_kv.find("train.threads") == train_kv.end()) tc.threads = o.threads;
  mc.validate();
  tc.validate();

  print_header(std::cout, mc, &tc,
               {{"data", o.data_dir}, {"modality", to_string(modality)}});

  if (modality != Modality::joint) {
    data = derive_modality_dataset(data, preset(data.skeleton_name), modality);
  }
  ModelState state = ModelState::init(mc, tc.seed);
  std::cout << "params " << model_param_count(state) << "\n";
  TrainResult result = train(state, data, tc, o.quiet ? nullptr : &std::cout);

  const ModelState& to_save = o.save_best ? result.best_state : state;
  save_checkpoint(o.out, to_save, modality);
  if (!o.history.empty()) {
    std::ofstream hs(o.history);
    if (!hs) throw IoError("cannot write history file: " + o.history);
    hs << history_to_csv(result.history);
  }
  const EpochStats& last = result.history.back();
  std::cout << "final_train_acc " << last.train_acc << "\n"
            << "final_val_acc " << last.val_acc << "\n"
            << "best_epoch " << result.best_epoch << "\n"
            << "best_val_acc " << result.best_val_acc << "\n"
            << "checkpoint " << o.out << (o.save_best ? " (best epoch)" : " (final epoch)")
            << "\n";
  return 0;
}

struct EvalOptions {
  std::string ckpt;
  std::string data_dir;
  std::string split = "val";
  int threads = default_threads();
};

const std::vector<SkeletonSequence>& pick_split(const Dataset& data, const std::string& split) {
  if (split == "val") return data.val;
  if (split == "train") return data.train;
  throw ConfigError("--split must be train or val, got: " + split);
}

int run_eval(const EvalOptions& o) {
  Modality modality = Modality::joint;
  const ModelState state = load_checkpoint(o.ckpt, &modality);
  Dataset data = load_dataset(o.data_dir);
  if (modality != Modality::joint) {
    data = derive_modality_dataset(data, state.skeleton, modality);
  }
  const auto& seqs = pick_split(data, o.split);
  print_header(std::cout, state.config, nullptr,
               {{"checkpoint", o.ckpt},
                {"data", o.data_dir},
                {"split", o.split},
                {"modality", to_string(modality)}});
  const double acc = evaluate_accuracy(state, seqs, o.threads);
  std::cout << "samples " << seqs.size() << "\n"
            << "accuracy " << acc << "\n";
  return 0;
}

struct EnsembleOptions {
  std::vector<std::string> ckpts;
  std::string data_dir;
  std::string split = "val";
  int threads = default_threads();
  bool use_logits = false;
};

int run_ensemble_eval(const EnsembleOptions& o) {
  if (o.ckpts.size() < 2) throw ConfigError("ensemble-eval needs at least two --ckpt files");
  const Dataset raw = load_dataset(o.data_dir);

  std::vector<ModelState> states;
  std::vector<Modality> modalities;
  for (const std::string& path : o.ckpts) {
    Modality m = Modality::joint;
    states.push_back(load_checkpoint(path, &m));
    modalities.push_back(m);
    if (states.back().config.num_classes != states.front().config.num_classes) {
      throw ConfigError("ensemble-eval: checkpoints disagree on the number of classes");
    }
  }
  std::vector<const std::vector<SkeletonSequence>*> stream_seqs;
  std::map<Modality, Dataset> derived;
  for (Modality m : modalities) {
    if (derived.find(m) == derived.end()) {
      derived[m] = m == Modality::joint
                       ? raw
                       : derive_modality_dataset(raw, states.front().skeleton, m);
    }
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    stream_seqs.push_back(&pick_split(derived[modalities[s]], o.split));
  }

  const std::int64_t n = static_cast<std::int64_t>(stream_seqs[0]->size());
  const std::size_t ns = states.size();
  std::vector<std::vector<std::uint8_t>> stream_hit(ns, std::vector<std::uint8_t>(n, 0));
  std::vector<std::uint8_t> fused_hit(static_cast<std::size_t>(n), 0);
  auto eval_one = [&](std::int64_t i) {
    const std::int64_t label = (*stream_seqs[0])[static_cast<std::size_t>(i)].label;
    std::vector<Tensor> votes;
    for (std::size_t s = 0; s < ns; ++s) {
      const SkeletonSequence& seq = (*stream_seqs[s])[static_cast<std::size_t>(i)];
      if (o.use_logits) {
        votes.push_back(model_forward(states[s], seq.coords));
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < votes.back().size(); ++j) {
          if (votes.back()[j] > votes.back()[arg]) arg = j;
        }
        stream_hit[s][static_cast<std::size_t>(i)] = arg == label ? 1 : 0;
      } else {
        const Prediction p = model_predict(states[s], seq.coords);
        stream_hit[s][static_cast<std::size_t>(i)] = p.label == label ? 1 : 0;
        votes.push_back(p.probs);
      }
    }
    const Prediction fused = o.use_logits ? ensemble_logits(votes) : ensemble_probs(votes);
    fused_hit[static_cast<std::size_t>(i)] = fused.label == label ? 1 : 0;
  };
  const int nthreads = std::max(1, std::min<int>(o.threads, static_cast<int>(n)));
  if (nthreads == 1) {
    for (std::int64_t i = 0; i < n; ++i) eval_one(i);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < nthreads; ++w) {
      pool.emplace_back([&] {
        for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) eval_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::cout << "# data = " << o.data_dir << "\n# split = " << o.split << "\n# fuse = "
            << (o.use_logits ? "logits" : "probs") << "\nsamples " << n << "\n";
  for (std::size_t s = 0; s < ns; ++s) {
    std::int64_t hits = 0;
    for (std::uint8_t h : stream_hit[s]) hits += h;
    std::cout << "stream" << s << " " << o.ckpts[s] << " modality " << to_string(modalities[s])
              << " accuracy " << static_cast<double>(hits) / static_cast<double>(n) << "\n";
  }
  std::int64_t hits = 0;
  for (std::uint8_t h : fused_hit) hits += h;
  std::cout << "ensemble_accuracy " << static_cast<double>(hits) / static_cast<double>(n)
            << "\n";
  return 0;
}

struct GradcheckOptions {
  std::string config = "tiny";
  std::vector<std::string> sets;
  double eps = 1e-5;
  double tol = 1e-4;
  double jitter = 0.2;
  std::int64_t max_coords = 0;
  std::uint64_t seed = 1;
};

int run_gradcheck(const GradcheckOptions& o) {
  std::map<std::string, std::string> kv = resolve_config_kv(o.config);
  apply_overrides(kv, o.sets);
  std::map<std::string, std::string> model_kv, train_kv;
  split_config_kv(kv, model_kv, train_kv);
  const ModelConfig mc = ModelConfig::from_kv(model_kv);
  mc.validate();

  const Skeleton sk = preset(mc.skeleton);
  const SynthSpec spec = SynthSpec::separable(mc.num_classes, sk.num_joints, o.seed);
  const Dataset data = generate_synthetic(spec, 1, mc.frames, o.seed);
  std::vector<const SkeletonSequence*> batch;
  for (const SkeletonSequence& s : data.train) batch.push_back(&s);
  for (const SkeletonSequence& s : data.val) batch.push_back(&s);

  ModelState state = ModelState::init(mc, o.seed);
  // Shift every parameter off its init point: zero-started tensors (head,
  // residual-branch tails, encoding table) carry no gradient exactly at
  // init, and the normalized all-zero table row is a kink.
  Rng jrng(o.seed ^ 0x9E3779B97F4A7C15ULL);
  for (auto& [name, t] : state.named_tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) {
      (*t)[i] += jrng.uniform(-o.jitter, o.jitter);
    }
  }
  ModelState grads = state.zeros_like();
  model_loss_and_grads(state, batch, grads, 1);

  auto ps = state.named_tensors();
  auto gs = grads.named_tensors();
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    refs.push_back({ps[i].first, ps[i].second, gs[i].second});
  }
  std::vector<std::int64_t> labels;
  for (const SkeletonSequence* s : batch) labels.push_back(s->label);
  auto loss_only = [&]() {
    Tensor logits({static_cast<std::int64_t>(batch.size()), mc.num_classes});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor li = model_forward(state, batch[i]->coords);
      for (std::int64_t j = 0; j < mc.num_classes; ++j) {
        logits[static_cast<std::int64_t>(i) * mc.num_classes + j] = li[j];
      }
    }
    return softmax_cross_entropy(logits, labels, nullptr);
  };
  const GradCheckReport report = gradcheck(refs, loss_only, o.eps, o.max_coords);

  print_header(std::cout, mc, nullptr, {{"batch", std::to_string(batch.size())}});
  std::cout << (report.passed(o.tol) ? "PASS" : "FAIL") << " max_rel_err=" << report.max_rel_error
            << " worst=" << report.worst_param << "[" << report.worst_index << "]"
            << " checked=" << report.checked << "\n";
  return report.passed(o.tol) ? 0 : 1;
}

struct CountParamsOptions {
  std::string config = "desk";
  std::vector<std::string> sets;
  std::int64_t k = -1;
};

int run_count_params(const CountParamsOptions& o) {
  std::map<std::string, std::string> kv = resolve_config_kv(o.config);
  apply_overrides(kv, o.sets);
  if (o.k > 0) kv["k"] = std::to_string(o.k);
  std::map<std::string, std::string> model_kv, train_kv;
  split_config_kv(kv, model_kv, train_kv);
  const ModelConfig mc = ModelConfig::from_kv(model_kv);
  mc.validate();

  const ModelState state = ModelState::init(mc, 0);
  print_header(std::cout, mc, nullptr);
  std::int64_t proj_total = 0;
  std::int64_t adj_total = 0;
  std::int64_t gc_flops = 0;
  std::int64_t t = mc.frames;
  for (std::int64_t l = 0; l < mc.num_blocks(); ++l) {
    const BlockGCParams& gc = state.blocks[static_cast<std::size_t>(l)].gc;
    const std::int64_t proj =
        blockgc_projection_params(gc.variant, gc.k, gc.d_in, gc.d_out);
    const std::int64_t adj = gc.a.size();
    const std::int64_t flops = blockgc_flop_count(gc, t);
    std::cout << "block" << l << " d_in " << gc.d_in << " d_out " << gc.d_out
              << " projection_params " << proj << " adjacency_params " << adj << " gc_flops "
              << flops << "\n";
    proj_total += proj;
    adj_total += adj;
    gc_flops += flops;
    if (mc.temporal_enabled) t = (t - 1) / mc.strides[static_cast<std::size_t>(l)] + 1;
  }
  std::cout << "projection_params " << proj_total << "\n"
            << "adjacency_params " << adj_total << "\n"
            << "gc_flops " << gc_flops << "\n"
            << "total_params " << model_param_count(state) << "\n"
            << "formula_params "
            << model_param_formula(mc, state.skeleton.num_joints, state.dist.max_entry()) << "\n";
  return 0;
}

struct ForgettingOptions {
  std::string data_dir;
  std::string config;
  std::vector<std::string> sets;
  std::string inits = "physical,identity,ones,uniform";
  std::int64_t epochs = 15;
  std::uint64_t seed = 1;
  int threads = default_threads();
  bool quiet = false;
};

TrainConfig probe_train_config(std::int64_t epochs, std::uint64_t seed, int threads) {
  TrainConfig tc;
  tc.total_epochs = epochs;
  tc.warmup_epochs = std::min<std::int64_t>(3, epochs - 1);
  tc.decay_epochs.clear();
  if (epochs >= 6) tc.decay_epochs.push_back((epochs * 2) / 3);
  tc.seed = seed;
  tc.threads = threads;
  return tc;
}

int run_probe_forgetting(const ForgettingOptions& o) {
  const Dataset data = load_dataset(o.data_dir);

  std::map<std::string, std::string> kv = forgetting_baseline_config(data).to_kv();
  for (const auto& [key, value] : resolve_config_kv(o.config)) kv[key] = value;
  apply_overrides(kv, o.sets);
  std::map<std::string, std::string> model_kv, train_kv;
  split_config_kv(kv, model_kv, train_kv);
  const ModelConfig base = ModelConfig::from_kv(model_kv);
  TrainConfig tc = probe_train_config(o.epochs, o.seed, o.threads);
  if (!train_kv.empty()) {
    std::map<std::string, std::string> merged = tc.to_kv();
    for (const auto& [key, value] : train_kv) merged[key] = value;
    tc = TrainConfig::from_kv(merged);
  }
  tc.validate();

  std::vector<AInit> inits;
  {
    std::istringstream is(o.inits);
    std::string tok;
    while (std::getline(is, tok, ',')) inits.push_back(a_init_from_string(tok));
  }

  print_header(std::cout, base, &tc,
               {{"data", o.data_dir}, {"inits", o.inits}});
  const ForgettingReport report =
      run_forgetting_probe(data, base, tc, inits, o.quiet ? nullptr : &std::cout);
  std::cout << format_forgetting_report(report);
  return 0;
}

struct MeanFrameOptions {
  std::string data_dir;
  std::string config;
  std::vector<std::string> sets;
  std::int64_t epochs = 20;
  std::uint64_t seed = 1;
  std::uint64_t frame_seed = 7;
  int threads = default_threads();
  bool quiet = false;
};

int run_mean_frame(const MeanFrameOptions& o) {
  const Dataset data = load_dataset(o.data_dir);

  std::map<std::string, std::string> kv = mean_frame_baseline_config(data).to_kv();
  for (const auto& [key, value] : resolve_config_kv(o.config)) kv[key] = value;
  apply_overrides(kv, o.sets);
  std::map<std::string, std::string> model_kv, train_kv;
  split_config_kv(kv, model_kv, train_kv);
  const ModelConfig base = ModelConfig::from_kv(model_kv);
  TrainConfig tc = probe_train_config(o.epochs, o.seed, o.threads);
  if (!train_kv.empty()) {
    std::map<std::string, std::string> merged = tc.to_kv();
    for (const auto& [key, value] : train_kv) merged[key] = value;
    tc = TrainConfig::from_kv(merged);
  }
  tc.validate();

  print_header(std::cout, base, &tc, {{"data", o.data_dir}});
  const MeanFrameReport report =
      run_mean_frame_probe(data, base, tc, o.frame_seed, o.quiet ? nullptr : &std::cout);
  std::cout << format_mean_frame_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton action recognition with block-diagonal graph convolutions"};
  app.require_subcommand(1);
  int rc = 0;

  GenDataOptions gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate a synthetic skeleton dataset");
  cmd_gen->add_option("--out", gen.out, "Output dataset directory")->required();
  cmd_gen->add_option("--kind", gen.kind, "separable or degenerate");
  cmd_gen->add_option("--skeleton", gen.skeleton, "Skeleton preset name");
  cmd_gen->add_option("--classes", gen.classes, "Number of classes");
  cmd_gen->add_option("--frames", gen.frames, "Frames per sequence");
  cmd_gen->add_option("--per-class", gen.per_class, "Sequences per class");
  cmd_gen->add_option("--seed", gen.seed, "Generator seed");
  cmd_gen->callback([&] { rc = run_gen_data(gen); });

  TrainOptions tr;
  auto* cmd_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  cmd_train->add_option("--data", tr.data_dir, "Dataset directory")->required();
  cmd_train->add_option("--out", tr.out, "Checkpoint output path")->required();
  cmd_train->add_option("--config", tr.config, "Preset name (tiny/desk/paper) or config file");
  cmd_train->add_option("--set", tr.sets, "Override as key=value (repeatable)");
  cmd_train->add_option("--modality", tr.modality, "joint, bone, joint_motion or bone_motion");
  cmd_train->add_option("--history", tr.history, "Write per-epoch CSV here");
  cmd_train->add_option("--threads", tr.threads, "Worker threads");
  cmd_train->add_flag("--save-best", tr.save_best, "Save the best-validation epoch state");
  cmd_train->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress lines");
  cmd_train->callback([&] { rc = run_train(tr); });

  EvalOptions ev;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  cmd_eval->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  cmd_eval->add_option("--data", ev.data_dir, "Dataset directory")->required();
  cmd_eval->add_option("--split", ev.split, "train or val");
  cmd_eval->add_option("--threads", ev.threads, "Worker threads");
  cmd_eval->callback([&] { rc = run_eval(ev); });

  EnsembleOptions en;
  auto* cmd_ens = app.add_subcommand("ensemble-eval", "Fuse several checkpoints by mean score");
  cmd_ens->add_option("--ckpt", en.ckpts, "Checkpoint path (repeat per stream)")->required();
  cmd_ens->add_option("--data", en.data_dir, "Dataset directory")->required();
  cmd_ens->add_option("--split", en.split, "train or val");
  cmd_ens->add_option("--threads", en.threads, "Worker threads");
  cmd_ens->add_flag("--use-logits", en.use_logits, "Fuse raw logits instead of probabilities");
  cmd_ens->callback([&] { rc = run_ensemble_eval(en); });

  GradcheckOptions gc;
  auto* cmd_gc = app.add_subcommand("gradcheck", "Compare analytic gradients to central differences");
  cmd_gc->add_option("--config", gc.config, "Preset name or config file");
  cmd_gc->add_option("--set", gc.sets, "Override as key=value (repeatable)");
  cmd_gc->add_option("--eps", gc.eps, "Finite-difference step");
  cmd_gc->add_option("--tol", gc.tol, "Max relative error to pass");
  cmd_gc->add_option("--jitter", gc.jitter, "Uniform parameter shift applied before checking");
  cmd_gc->add_option("--max-coords", gc.max_coords, "Coordinates probed per tensor (0 = all)");
  cmd_gc->add_option("--seed", gc.seed, "Model and data seed");
  cmd_gc->callback([&] { rc = run_gradcheck(gc); });

  CountParamsOptions cp;
  auto* cmd_cp = app.add_subcommand("count-params", "Print parameter and flop accounting");
  cmd_cp->add_option("--config", cp.config, "Preset name or config file");
  cmd_cp->add_option("--set", cp.sets, "Override as key=value (repeatable)");
  cmd_cp->add_option("--k", cp.k, "Shorthand for --set k=N");
  cmd_cp->callback([&] { rc = run_count_params(cp); });

  ForgettingOptions fo;
  auto* cmd_fo = app.add_subcommand(
      "probe-forgetting", "Train one no-encoding baseline per adjacency init and compare");
  cmd_fo->add_option("--data", fo.data_dir, "Dataset directory")->required();
  cmd_fo->add_option("--config", fo.config, "Baseline override (preset or file)");
  cmd_fo->add_option("--set", fo.sets, "Override as key=value (repeatable)");
  cmd_fo->add_option("--inits", fo.inits, "Comma list of physical,identity,ones,uniform");
  cmd_fo->add_option("--epochs", fo.epochs, "Epochs per run");
  cmd_fo->add_option("--seed", fo.seed, "Training seed");
  cmd_fo->add_option("--threads", fo.threads, "Worker threads");
  cmd_fo->add_flag("--quiet", fo.quiet, "Suppress per-epoch progress lines");
  cmd_fo->callback([&] { rc = run_probe_forgetting(fo); });

  MeanFrameOptions mf;
  auto* cmd_mf = app.add_subcommand(
      "mean-frame-experiment", "Single-frame classifiers on mean vs random frames");
  cmd_mf->add_option("--data", mf.data_dir, "Dataset directory")->required();
  cmd_mf->add_option("--config", mf.config, "Baseline override (preset or file)");
  cmd_mf->add_option("--set", mf.sets, "Override as key=value (repeatable)");
  cmd_mf->add_option("--epochs", mf.epochs, "Epochs per classifier");
  cmd_mf->add_option("--seed", mf.seed, "Training seed");
  cmd_mf->add_option("--frame-seed", mf.frame_seed, "Random-frame pick seed");
  cmd_mf->add_option("--threads", mf.threads, "Worker threads");
  cmd_mf->add_flag("--quiet", mf.quiet, "Suppress per-epoch progress lines");
  cmd_mf->callback([&] { rc = run_mean_frame(mf); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 5;
  } catch (const ValueError& e) {
    std::cerr << "value error: " << e.what() << "\n";
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 6;
  } catch (const TopologyError& e) {
    std::cerr << "topology error: " << e.what() << "\n";
    return 7;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
