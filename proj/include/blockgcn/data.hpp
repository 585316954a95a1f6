#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockgcn/rng.hpp"
#include "blockgcn/skeleton.hpp"
#include "blockgcn/tensor.hpp"

namespace blockgcn {

// One recorded action: joint coordinates over time plus its class label.
struct SkeletonSequence {
  Tensor coords;  // [T, V, 3]
  std::int64_t label = 0;

  std::int64_t frames() const { return coords.ndim() == 3 ? coords.dim(0) : 0; }
  std::int64_t joints() const { return coords.ndim() == 3 ? coords.dim(1) : 0; }
};

// File format: one text header line "SKEL1 T V label" followed by T*V*3
// little-endian float64 values in row-major [T,V,3] order.
void save_sequence(const std::string& path, const SkeletonSequence& seq);
SkeletonSequence load_sequence(const std::string& path);

// Linear interpolation along time onto target_t frames.
SkeletonSequence resize_frames(const SkeletonSequence& seq, std::int64_t target_t);

// One rotation Rz(az)*Ry(ay)*Rx(ax) with each angle uniform in
// [-max_angle, max_angle], applied to every joint of every frame.
SkeletonSequence random_rotation(const SkeletonSequence& seq, Rng& rng, double max_angle);

enum class Modality { joint, bone, joint_motion, bone_motion };
Modality modality_from_string(const std::string& s);
std::string to_string(Modality m);

// joint: raw coordinates. bone: joint minus its parent joint (zero at the
// root). *_motion: next frame minus current, zero-padded final frame.
SkeletonSequence derive_modality(const SkeletonSequence& seq, const Skeleton& skeleton,
                                 Modality m);

struct SinusoidMotion {
  std::int64_t joint = 0;
  std::int64_t axis = 0;      // 0..2
  double amplitude = 0.0;
  std::int64_t frequency = 1;  // whole cycles per window, so the mean vanishes
  double phase = 0.0;
};

// Recipe for the synthetic datasets. mean_separable=true gives every class
// its own base pose under motions shared by all classes, so the temporal
// mean carries the label. mean_separable=false shares one base pose and
// moves classes apart only through zero-mean motions, so temporal means
// coincide across classes by construction.
struct SynthSpec {
  std::int64_t num_classes = 4;
  std::int64_t joints = 25;
  std::vector<Tensor> base_poses;                       // per class [V,3]
  std::vector<std::vector<SinusoidMotion>> motions;     // per class
  double noise_sigma = 0.05;
  bool per_sample_phase = true;  // one global phase offset drawn per sample
  bool mean_separable = true;

  void validate() const;
  static SynthSpec separable(std::int64_t num_classes, std::int64_t joints, std::uint64_t seed);
  static SynthSpec degenerate(std::int64_t num_classes, std::int64_t joints, std::uint64_t seed);
};

struct Dataset {
  std::vector<SkeletonSequence> train;
  std::vector<SkeletonSequence> val;
  std::int64_t num_classes = 0;
  std::int64_t frames = 0;
  std::int64_t joints = 0;
  std::string skeleton_name = "ntu25";
};

// Per class: n_per_class sequences of T frames, split 80/20 per class by a
// seeded shuffle. Fully deterministic given the seed.
Dataset generate_synthetic(const SynthSpec& spec, std::int64_t n_per_class, std::int64_t t,
                           std::uint64_t seed);

// Directory layout: manifest.txt (key=value) plus train/NNNNN.skl and
// val/NNNNN.skl sequence files.
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

// Applies the modality transform to every sequence of both splits.
Dataset derive_modality_dataset(const Dataset& data, const Skeleton& skeleton, Modality m);

}  // namespace blockgcn
