#include "blockgcn/data.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "blockgcn/config.hpp"
#include "blockgcn/error.hpp"

namespace blockgcn {

namespace fs = std::filesystem;

void save_sequence(const std::string& path, const SkeletonSequence& seq) {
  if (seq.coords.ndim() != 3 || seq.coords.dim(2) != 3) {
    throw ShapeError("sequence coords must be [T,V,3], got " + seq.coords.shape_str());
  }
  if (!seq.coords.all_finite()) {
    throw NumericError("refusing to save sequence with non-finite coordinates");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "SKEL1 " << seq.frames() << " " << seq.joints() << " " << seq.label << "\n";
  os.write(reinterpret_cast<const char*>(seq.coords.data()),
           static_cast<std::streamsize>(seq.coords.size() * sizeof(double)));
  if (!os) throw IoError("failed writing sequence payload: " + path);
}

SkeletonSequence load_sequence(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::string header;
  if (!std::getline(is, header)) throw IoError("malformed header in " + path + ": empty file");
  std::istringstream hs(header);
  std::string magic;
  std::int64_t t = -1, v = -1, label = -1;
  hs >> magic >> t >> v >> label;
  std::string extra;
  if (magic != "SKEL1" || hs.fail() || (hs >> extra) || t < 1 || v < 1 || label < 0) {
    throw IoError("malformed header in " + path + ": '" + header + "'");
  }
  SkeletonSequence seq;
  seq.label = label;
  seq.coords = Tensor({t, v, 3});
  is.read(reinterpret_cast<char*>(seq.coords.data()),
          static_cast<std::streamsize>(seq.coords.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(seq.coords.size() * sizeof(double))) {
    throw IoError("truncated sequence payload in " + path);
  }
  char spare = 0;
  if (is.read(&spare, 1)) throw IoError("trailing bytes after payload in " + path);
  if (!seq.coords.all_finite()) {
    throw NumericError("sequence payload contains non-finite values: " + path);
  }
  return seq;
}

SkeletonSequence resize_frames(const SkeletonSequence& seq, std::int64_t target_t) {
  if (target_t < 1) throw ValueError("resize_frames: target must be >= 1");
  const std::int64_t t = seq.frames(), v = seq.joints();
  if (t < 1) throw ValueError("resize_frames: empty sequence");
  SkeletonSequence out;
  out.label = seq.label;
  out.coords = Tensor({target_t, v, 3});
  for (std::int64_t i = 0; i < target_t; ++i) {
    const double pos = target_t == 1
                           ? 0.0
                           : static_cast<double>(i) * static_cast<double>(t - 1) /
                                 static_cast<double>(target_t - 1);
    const std::int64_t lo = static_cast<std::int64_t>(pos);
    const std::int64_t hi = std::min(lo + 1, t - 1);
    const double w = pos - static_cast<double>(lo);
    const double* flo = seq.coords.data() + lo * v * 3;
    const double* fhi = seq.coords.data() + hi * v * 3;
    double* dst = out.coords.data() + i * v * 3;
    for (std::int64_t j = 0; j < v * 3; ++j) dst[j] = (1.0 - w) * flo[j] + w * fhi[j];
  }
  return out;
}

SkeletonSequence random_rotation(const SkeletonSequence& seq, Rng& rng, double max_angle) {
  if (max_angle < 0.0) throw ValueError("random_rotation: max_angle must be >= 0");
  const double ax = rng.uniform(-max_angle, max_angle);
  const double ay = rng.uniform(-max_angle, max_angle);
  const double az = rng.uniform(-max_angle, max_angle);
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  // R = Rz(az) * Ry(ay) * Rx(ax)
  const double r[3][3] = {
      {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
      {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
      {-sy, cy * sx, cy * cx},
  };
  SkeletonSequence out;
  out.label = seq.label;
  out.coords = Tensor(seq.coords.shape());
  const std::int64_t n = seq.coords.size() / 3;
  for (std::int64_t p = 0; p < n; ++p) {
    const double* src = seq.coords.data() + p * 3;
    double* dst = out.coords.data() + p * 3;
    for (int i = 0; i < 3; ++i) {
      dst[i] = r[i][0] * src[0] + r[i][1] * src[1] + r[i][2] * src[2];
    }
  }
  return out;
}

Modality modality_from_string(const std::string& s) {
  if (s == "joint") return Modality::joint;
  if (s == "bone") return Modality::bone;
  if (s == "joint_motion") return Modality::joint_motion;
  if (s == "bone_motion") return Modality::bone_motion;
  throw ValueError("unknown modality: " + s);
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::joint: return "joint";
    case Modality::bone: return "bone";
    case Modality::joint_motion: return "joint_motion";
    case Modality::bone_motion: return "bone_motion";
  }
  return "?";
}

namespace {

SkeletonSequence bone_of(const SkeletonSequence& seq, const Skeleton& skeleton) {
  const std::int64_t t = seq.frames(), v = seq.joints();
  if (static_cast<std::int64_t>(skeleton.parent.size()) != v) {
    throw TopologyError("skeleton parent map does not match sequence joints");
  }
  for (std::int64_t j = 0; j < v; ++j) {
    if (skeleton.parent[static_cast<std::size_t>(j)] < 0) {
      throw TopologyError("parent map undefined for joint " + std::to_string(j));
    }
  }
  SkeletonSequence out;
  out.label = seq.label;
  out.coords = Tensor({t, v, 3});
  for (std::int64_t tt = 0; tt < t; ++tt) {
    for (std::int64_t j = 0; j < v; ++j) {
      const std::int64_t p = skeleton.parent[static_cast<std::size_t>(j)];
      const double* xj = seq.coords.data() + (tt * v + j) * 3;
      const double* xp = seq.coords.data() + (tt * v + p) * 3;
      double* dst = out.coords.data() + (tt * v + j) * 3;
      for (int c = 0; c < 3; ++c) dst[c] = xj[c] - xp[c];
    }
  }
  return out;
}

SkeletonSequence motion_of(const SkeletonSequence& seq) {
  const std::int64_t t = seq.frames(), v = seq.joints();
  SkeletonSequence out;
  out.label = seq.label;
  out.coords = Tensor({t, v, 3});
  for (std::int64_t tt = 0; tt + 1 < t; ++tt) {
    const double* cur = seq.coords.data() + tt * v * 3;
    const double* nxt = seq.coords.data() + (tt + 1) * v * 3;
    double* dst = out.coords.data() + tt * v * 3;
    for (std::int64_t j = 0; j < v * 3; ++j) dst[j] = nxt[j] - cur[j];
  }
  return out;  // final frame stays zero
}

}  // namespace

SkeletonSequence derive_modality(const SkeletonSequence& seq, const Skeleton& skeleton,
                                 Modality m) {
  switch (m) {
    case Modality::joint: return seq;
    case Modality::bone: return bone_of(seq, skeleton);
    case Modality::joint_motion: return motion_of(seq);
    case Modality::bone_motion: return motion_of(bone_of(seq, skeleton));
  }
  throw ValueError("unknown modality");
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw ValueError("synth spec: need at least two classes");
  if (joints < 2) throw ValueError("synth spec: need at least two joints");
  if (static_cast<std::int64_t>(base_poses.size()) != num_classes ||
      static_cast<std::int64_t>(motions.size()) != num_classes) {
    throw ValueError("synth spec: base_poses and motions must have one entry per class");
  }
  if (noise_sigma < 0.0) throw ValueError("synth spec: noise_sigma must be >= 0");
  for (const Tensor& pose : base_poses) {
    if (pose.ndim() != 2 || pose.dim(0) != joints || pose.dim(1) != 3) {
      throw ShapeError("synth spec: base pose must be [V,3]");
    }
  }
  for (const auto& class_motions : motions) {
    for (const SinusoidMotion& m : class_motions) {
      if (m.joint < 0 || m.joint >= joints) throw ValueError("synth spec: motion joint range");
      if (m.axis < 0 || m.axis >= 3) throw ValueError("synth spec: motion axis range");
      if (m.frequency < 1) {
        throw ValueError("synth spec: frequency must be a positive whole cycle count");
      }
    }
  }
  if (mean_separable) {
    // Class mean frames must stay apart well beyond the noise floor.
    for (std::int64_t a = 0; a < num_classes; ++a) {
      for (std::int64_t b = a + 1; b < num_classes; ++b) {
        double dist = 0.0;
        for (std::int64_t i = 0; i < base_poses[a].size(); ++i) {
          const double d = base_poses[a][i] - base_poses[b][i];
          dist = std::max(dist, std::abs(d));
        }
        if (dist <= 4.0 * noise_sigma) {
          throw ValueError("synth spec: separable base poses too close (classes " +
                           std::to_string(a) + ", " + std::to_string(b) + ")");
        }
      }
    }
  } else {
    for (std::int64_t c = 1; c < num_classes; ++c) {
      for (std::int64_t i = 0; i < base_poses[0].size(); ++i) {
        if (base_poses[static_cast<std::size_t>(c)][i] != base_poses[0][i]) {
          throw ValueError("synth spec: degenerate datasets need identical base poses");
        }
      }
    }
  }
}

SynthSpec SynthSpec::separable(std::int64_t num_classes, std::int64_t joints,
                               std::uint64_t seed) {
  SynthSpec spec;
  spec.num_classes = num_classes;
  spec.joints = joints;
  spec.mean_separable = true;
  Rng rng(seed);
  // One shared body layout; each class translates the whole body along its
  // own direction. A coherent whole-body sway (same per-axis sinusoid on
  // every joint, integer cycles over the clip) displaces single frames by
  // more than the class shift but averages to exactly zero over time, so the
  // temporal mean identifies the class while any one frame is ambiguous.
  Tensor layout({joints, 3});
  for (std::int64_t i = 0; i < layout.size(); ++i) layout[i] = rng.uniform(-0.25, 0.25);
  std::vector<std::array<double, 3>> dirs;
  double max_dot = 0.5;
  int attempts = 0;
  while (static_cast<std::int64_t>(dirs.size()) < num_classes) {
    std::array<double, 3> u = {rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)};
    const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    if (n < 1e-6) continue;
    for (double& x : u) x /= n;
    bool ok = true;
    for (const auto& v : dirs) {
      if (u[0] * v[0] + u[1] * v[1] + u[2] * v[2] > max_dot) ok = false;
    }
    if (ok) {
      dirs.push_back(u);
      attempts = 0;
    } else if (++attempts > 200) {
      max_dot = std::min(1.0, max_dot + 0.05);
      attempts = 0;
    }
  }
  const double shift = 2.0;
  for (std::int64_t c = 0; c < num_classes; ++c) {
    Tensor pose = layout;
    const auto& u = dirs[static_cast<std::size_t>(c)];
    for (std::int64_t j = 0; j < joints; ++j) {
      for (std::int64_t axis = 0; axis < 3; ++axis) {
        pose[j * 3 + axis] += shift * u[static_cast<std::size_t>(axis)];
      }
    }
    spec.base_poses.push_back(std::move(pose));
  }
  std::vector<SinusoidMotion> sway;
  Rng mrng = rng.derive(7);
  std::vector<std::int64_t> freqs = {1, 2, 3};
  mrng.shuffle(freqs);
  for (std::int64_t axis = 0; axis < 3; ++axis) {
    const double amplitude = mrng.uniform(1.6, 2.2);
    const double phase = mrng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::int64_t j = 0; j < joints; ++j) {
      SinusoidMotion m;
      m.joint = j;
      m.axis = axis;
      m.amplitude = amplitude;
      m.frequency = freqs[static_cast<std::size_t>(axis)];
      m.phase = phase;
      sway.push_back(m);
    }
  }
  spec.motions.assign(static_cast<std::size_t>(num_classes), sway);
  spec.noise_sigma = 0.025;
  spec.per_sample_phase = true;
  spec.validate();
  return spec;
}

SynthSpec SynthSpec::degenerate(std::int64_t num_classes, std::int64_t joints,
                                std::uint64_t seed) {
  SynthSpec spec;
  spec.num_classes = num_classes;
  spec.joints = joints;
  spec.mean_separable = false;
  Rng rng(seed);
  Tensor layout({joints, 3});
  for (std::int64_t i = 0; i < layout.size(); ++i) layout[i] = rng.uniform(-0.5, 0.5);
  spec.base_poses.assign(static_cast<std::size_t>(num_classes), layout);
  for (std::int64_t c = 0; c < num_classes; ++c) {
    Rng crng = rng.derive(200 + static_cast<std::uint64_t>(c));
    std::vector<SinusoidMotion> ms;
    for (std::int64_t j = 0; j < joints; ++j) {
      SinusoidMotion m;
      m.joint = j;
      m.axis = static_cast<std::int64_t>(crng.next_below(3));
      m.amplitude = crng.uniform(0.3, 0.6);
      m.frequency = 1 + static_cast<std::int64_t>(crng.next_below(3));
      m.phase = crng.uniform(0.0, 2.0 * std::numbers::pi);
      ms.push_back(m);
    }
    spec.motions.push_back(std::move(ms));
  }
  spec.noise_sigma = 0.025;
  spec.per_sample_phase = true;
  spec.validate();
  return spec;
}

Dataset generate_synthetic(const SynthSpec& spec, std::int64_t n_per_class, std::int64_t t,
                           std::uint64_t seed) {
  spec.validate();
  if (n_per_class < 1) throw ValueError("generate_synthetic: n_per_class must be >= 1");
  if (t < 1) throw ValueError("generate_synthetic: t must be >= 1");
  Dataset data;
  data.num_classes = spec.num_classes;
  data.frames = t;
  data.joints = spec.joints;
  Rng root(seed);
  std::vector<std::vector<SkeletonSequence>> by_class(
      static_cast<std::size_t>(spec.num_classes));
  for (std::int64_t c = 0; c < spec.num_classes; ++c) {
    const Tensor& pose = spec.base_poses[static_cast<std::size_t>(c)];
    const auto& motions = spec.motions[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < n_per_class; ++i) {
      Rng srng = root.derive(static_cast<std::uint64_t>(c * n_per_class + i));
      const double global_phase =
          spec.per_sample_phase ? srng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
      SkeletonSequence seq;
      seq.label = c;
      seq.coords = Tensor({t, spec.joints, 3});
      for (std::int64_t tt = 0; tt < t; ++tt) {
        double* frame = seq.coords.data() + tt * spec.joints * 3;
        for (std::int64_t j = 0; j < spec.joints * 3; ++j) frame[j] = pose[j];
      }
      for (const SinusoidMotion& m : motions) {
        for (std::int64_t tt = 0; tt < t; ++tt) {
          const double angle = 2.0 * std::numbers::pi * static_cast<double>(m.frequency) *
                                   static_cast<double>(tt) / static_cast<double>(t) +
                               m.phase + global_phase;
          seq.coords[(tt * spec.joints + m.joint) * 3 + m.axis] +=
              m.amplitude * std::sin(angle);
        }
      }
      if (spec.noise_sigma > 0.0) {
        for (std::int64_t j = 0; j < seq.coords.size(); ++j) {
          seq.coords[j] += srng.normal(0.0, spec.noise_sigma);
        }
      }
      by_class[static_cast<std::size_t>(c)].push_back(std::move(seq));
    }
  }
  // 80/20 split inside each class by seeded shuffle, then the train split is
  // shuffled once more so classes interleave.
  Rng split_rng = root.derive(0xD5);
  for (auto& group : by_class) {
    std::vector<std::size_t> order(group.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    split_rng.shuffle(order);
    const std::size_t n_train = (order.size() * 8 + 5) / 10;
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dst = i < n_train ? data.train : data.val;
      dst.push_back(std::move(group[order[i]]));
    }
  }
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  std::vector<SkeletonSequence> shuffled;
  shuffled.reserve(order.size());
  for (std::size_t i : order) shuffled.push_back(std::move(data.train[i]));
  data.train = std::move(shuffled);
  return data;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "train", ec);
  fs::create_directories(fs::path(dir) / "val", ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir);
  std::map<std::string, std::string> manifest;
  manifest["num_classes"] = std::to_string(data.num_classes);
  manifest["frames"] = std::to_string(data.frames);
  manifest["joints"] = std::to_string(data.joints);
  manifest["skeleton"] = data.skeleton_name;
  manifest["train_count"] = std::to_string(data.train.size());
  manifest["val_count"] = std::to_string(data.val.size());
  write_kv_file((fs::path(dir) / "manifest.txt").string(), manifest);
  auto save_split = [&dir](const std::string& split, const std::vector<SkeletonSequence>& seqs) {
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      std::ostringstream name;
      name << split << "/";
      name.fill('0');
      name.width(5);
      name << i;
      save_sequence((fs::path(dir) / (name.str() + ".skl")).string(), seqs[i]);
    }
  };
  save_split("train", data.train);
  save_split("val", data.val);
}

Dataset load_dataset(const std::string& dir) {
  const auto manifest = parse_kv_file((fs::path(dir) / "manifest.txt").string());
  auto need = [&manifest, &dir](const std::string& key) {
    const auto it = manifest.find(key);
    if (it == manifest.end()) throw IoError("dataset manifest missing key " + key + " in " + dir);
    return it->second;
  };
  Dataset data;
  try {
    data.num_classes = std::stoll(need("num_classes"));
    data.frames = std::stoll(need("frames"));
    data.joints = std::stoll(need("joints"));
    data.skeleton_name = need("skeleton");
    const std::int64_t n_train = std::stoll(need("train_count"));
    const std::int64_t n_val = std::stoll(need("val_count"));
    auto load_split = [&dir, &data](const std::string& split, std::int64_t count,
                                    std::vector<SkeletonSequence>& out) {
      for (std::int64_t i = 0; i < count; ++i) {
        std::ostringstream name;
        name << split << "/";
        name.fill('0');
        name.width(5);
        name << i;
        SkeletonSequence seq = load_sequence((fs::path(dir) / (name.str() + ".skl")).string());
        if (seq.frames() != data.frames || seq.joints() != data.joints ||
            seq.label >= data.num_classes) {
          throw IoError("dataset entry " + name.str() + " disagrees with manifest in " + dir);
        }
        out.push_back(std::move(seq));
      }
    };
    load_split("train", n_train, data.train);
    load_split("val", n_val, data.val);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("bad dataset manifest in " + dir + ": " + e.what());
  }
  return data;
}

Dataset derive_modality_dataset(const Dataset& data, const Skeleton& skeleton, Modality m) {
  Dataset out = data;
  for (SkeletonSequence& seq : out.train) seq = derive_modality(seq, skeleton, m);
  for (SkeletonSequence& seq : out.val) seq = derive_modality(seq, skeleton, m);
  return out;
}

}  // namespace blockgcn
