#include "blockgcn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <sstream>
#include <thread>

#include "blockgcn/error.hpp"
#include "blockgcn/tensor_ops.hpp"

namespace blockgcn {

TrainConfig TrainConfig::paper_schedule() {
  TrainConfig c;
  c.total_epochs = 140;
  c.decay_epochs = {110, 120};
  c.batch_size = 64;
  return c;
}

void TrainConfig::validate() const {
  if (base_lr <= 0.0) throw ConfigError("train: base_lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be >= 0");
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw ConfigError("train: decay_factor must be in (0,1]");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (total_epochs < 1) throw ConfigError("train: total_epochs must be >= 1");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
  if (clip_grad_norm < 0.0 || !std::isfinite(clip_grad_norm)) {
    throw ConfigError("train: clip_grad_norm must be finite and >= 0");
  }
  std::int64_t prev = -1;
  for (std::int64_t e : decay_epochs) {
    if (e <= prev) throw ConfigError("train: decay_epochs must be strictly increasing");
    if (e >= total_epochs) throw ConfigError("train: decay epochs must be < total_epochs");
    prev = e;
  }
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  auto fmt = [](double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  };
  kv["train.base_lr"] = fmt(base_lr);
  kv["train.momentum"] = fmt(momentum);
  kv["train.weight_decay"] = fmt(weight_decay);
  kv["train.warmup_epochs"] = std::to_string(warmup_epochs);
  std::ostringstream de;
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (i) de << ',';
    de << decay_epochs[i];
  }
  kv["train.decay_epochs"] = de.str();
  kv["train.decay_factor"] = fmt(decay_factor);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.total_epochs"] = std::to_string(total_epochs);
  kv["train.seed"] = std::to_string(seed);
  kv["train.threads"] = std::to_string(threads);
  kv["train.decay_encodings"] = decay_encodings ? "true" : "false";
  kv["train.augment_rotation"] = augment_rotation ? "true" : "false";
  kv["train.rotation_max_angle"] = fmt(rotation_max_angle);
  kv["train.clip_grad_norm"] = fmt(clip_grad_norm);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto parse_bool = [](const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true/false for " + key + ", got: " + v);
  };
  for (const auto& [key, value] : kv) {
    if (key.rfind("train.", 0) != 0) continue;
    try {
      if (key == "train.base_lr") c.base_lr = std::stod(value);
      else if (key == "train.momentum") c.momentum = std::stod(value);
      else if (key == "train.weight_decay") c.weight_decay = std::stod(value);
      else if (key == "train.warmup_epochs") c.warmup_epochs = std::stoll(value);
      else if (key == "train.decay_epochs") {
        c.decay_epochs.clear();
        std::istringstream is(value);
        std::string tok;
        while (std::getline(is, tok, ',')) c.decay_epochs.push_back(std::stoll(tok));
      } else if (key == "train.decay_factor") c.decay_factor = std::stod(value);
      else if (key == "train.batch_size") c.batch_size = std::stoll(value);
      else if (key == "train.total_epochs") c.total_epochs = std::stoll(value);
      else if (key == "train.seed") c.seed = std::stoull(value);
      else if (key == "train.threads") c.threads = std::stoi(value);
      else if (key == "train.decay_encodings") c.decay_encodings = parse_bool(value, key);
      else if (key == "train.augment_rotation") c.augment_rotation = parse_bool(value, key);
      else if (key == "train.rotation_max_angle") c.rotation_max_angle = std::stod(value);
      else if (key == "train.clip_grad_norm") c.clip_grad_norm = std::stod(value);
      else throw ConfigError("unknown config key: " + key);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for config key " + key + ": " + value);
    }
  }
  return c;
}

double lr_at(const TrainConfig& config, std::int64_t epoch) {
  if (epoch < 0 || epoch >= config.total_epochs) {
    throw ValueError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(config.total_epochs) + ")");
  }
  if (epoch < config.warmup_epochs) {
    return config.base_lr * static_cast<double>(epoch + 1) /
           static_cast<double>(config.warmup_epochs);
  }
  double lr = config.base_lr;
  for (std::int64_t e : config.decay_epochs) {
    if (epoch >= e) lr *= config.decay_factor;
  }
  return lr;
}

void sgd_step(ModelState& params, ModelState& grads, ModelState& velocity,
              const TrainConfig& config, double lr) {
  auto ps = params.named_tensors();
  auto gs = grads.named_tensors();
  auto vs = velocity.named_tensors();
  if (ps.size() != gs.size() || ps.size() != vs.size()) {
    throw ShapeError("sgd_step: parameter/gradient/velocity lists differ");
  }
  const double mu = config.momentum;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps[i].first;
    Tensor& p = *ps[i].second;
    Tensor& g = *gs[i].second;
    Tensor& v = *vs[i].second;
    if (!p.same_shape(g) || !p.same_shape(v)) {
      throw ShapeError("sgd_step: shape mismatch for " + name);
    }
    double wd = config.weight_decay;
    if (!config.decay_encodings &&
        (name.find(".topo.") != std::string::npos || name.find(".stat.") != std::string::npos)) {
      wd = 0.0;
    }
    for (std::int64_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] + wd * p[j];
      v[j] = mu * v[j] + gj;
      p[j] -= lr * (gj + mu * v[j]);
    }
  }
}

double evaluate_accuracy(const ModelState& state, const std::vector<SkeletonSequence>& seqs,
                         int threads) {
  if (seqs.empty()) throw ValueError("evaluate_accuracy: empty set");
  const std::int64_t n = static_cast<std::int64_t>(seqs.size());
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(n), 0);
  auto eval_one = [&](std::int64_t i) {
    const Prediction pred = model_predict(state, seqs[static_cast<std::size_t>(i)].coords);
    hit[static_cast<std::size_t>(i)] =
        pred.label == seqs[static_cast<std::size_t>(i)].label ? 1 : 0;
  };
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
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
  std::int64_t correct = 0;
  for (std::uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(n);
}

TrainResult train(ModelState& state, const Dataset& data, const TrainConfig& config,
                  std::ostream* log) {
  config.validate();
  if (data.train.empty() || data.val.empty()) {
    throw ValueError("train: dataset needs non-empty train and val splits");
  }
  TrainResult result;
  ModelState grads = state.zeros_like();
  ModelState velocity = state.zeros_like();
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    Rng erng = rng.derive(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t correct_sum = 0;
    std::int64_t seen = 0;
    const std::int64_t n = static_cast<std::int64_t>(order.size());
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const std::int64_t stop = std::min(n, start + config.batch_size);
      std::vector<SkeletonSequence> augmented;
      std::vector<const SkeletonSequence*> batch;
      for (std::int64_t i = start; i < stop; ++i) {
        const SkeletonSequence& base = data.train[order[static_cast<std::size_t>(i)]];
        if (config.augment_rotation) {
          Rng arng = erng.derive(0x100 + static_cast<std::uint64_t>(order[static_cast<std::size_t>(i)]));
          augmented.push_back(random_rotation(base, arng, config.rotation_max_angle));
        }
      }
      if (config.augment_rotation) {
        for (const SkeletonSequence& s : augmented) batch.push_back(&s);
      } else {
        for (std::int64_t i = start; i < stop; ++i) {
          batch.push_back(&data.train[order[static_cast<std::size_t>(i)]]);
        }
      }
      for (auto& [name, t] : grads.named_tensors()) t->fill(0.0);
      std::int64_t correct = 0;
      const double loss =
          model_loss_and_grads(state, batch, grads, config.threads, &correct);
      loss_sum += loss * static_cast<double>(batch.size());
      correct_sum += correct;
      seen += static_cast<std::int64_t>(batch.size());
      if (config.clip_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [name, t] : grads.named_tensors()) {
          for (std::int64_t j = 0; j < t->size(); ++j) sq += (*t)[j] * (*t)[j];
        }
        const double norm = std::sqrt(sq);
        if (norm > config.clip_grad_norm) {
          const double scale = config.clip_grad_norm / norm;
          for (auto& [name, t] : grads.named_tensors()) {
            for (std::int64_t j = 0; j < t->size(); ++j) (*t)[j] *= scale;
          }
        }
      }
      sgd_step(state, grads, velocity, config, lr);
    }
    for (const auto& [name, t] : state.named_tensors()) {
      if (!t->all_finite()) {
        throw NumericError("training diverged: non-finite values in " + name + " after epoch " +
                           std::to_string(epoch));
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_acc = static_cast<double>(correct_sum) / static_cast<double>(seen);
    stats.val_acc = evaluate_accuracy(state, data.val, config.threads);
    result.history.push_back(stats);
    if (stats.val_acc > result.best_val_acc || result.best_epoch < 0) {
      result.best_val_acc = stats.val_acc;
      result.best_epoch = epoch;
      result.best_state = state;
    }
    if (log != nullptr) {
      (*log) << "epoch " << epoch << " lr " << lr << " train_loss " << stats.train_loss
             << " train_acc " << stats.train_acc << " val_acc " << stats.val_acc << "\n";
      log->flush();
    }
  }
  return result;
}

std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os.precision(12);
  os << "epoch, lr, train_loss, train_acc, val_acc\n";
  for (const EpochStats& s : history) {
    os << s.epoch << ", " << s.lr << ", " << s.train_loss << ", " << s.train_acc << ", "
       << s.val_acc << "\n";
  }
  return os.str();
}

namespace {

Prediction fuse(const std::vector<Tensor>& streams, bool check_prob) {
  if (streams.empty()) throw ValueError("ensemble: no streams");
  const std::int64_t c = streams[0].dim(0);
  for (const Tensor& s : streams) {
    if (s.ndim() != 1 || s.dim(0) != c) {
      throw ShapeError("ensemble: stream length mismatch");
    }
    if (check_prob) {
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        if (s[j] < 0.0) throw ValueError("ensemble: negative probability");
        sum += s[j];
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ValueError("ensemble: stream probabilities do not sum to 1");
      }
    }
  }
  // Pairwise summation keeps a fusion of identical streams exactly equal to
  // each stream (power-of-two counts divide out exactly).
  std::vector<Tensor> level = streams;
  while (level.size() > 1) {
    std::vector<Tensor> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      Tensor s = level[i];
      add_inplace(s, level[i + 1]);
      next.push_back(std::move(s));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  Prediction out;
  out.probs = std::move(level[0]);
  scale_inplace(out.probs, 1.0 / static_cast<double>(streams.size()));
  out.label = 0;
  for (std::int64_t j = 1; j < c; ++j) {
    if (out.probs[j] > out.probs[out.label]) out.label = j;
  }
  return out;
}

}  // namespace

Prediction ensemble_probs(const std::vector<Tensor>& probs) { return fuse(probs, true); }

Prediction ensemble_logits(const std::vector<Tensor>& logits) { return fuse(logits, false); }

}  // namespace blockgcn
