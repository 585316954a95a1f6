#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blockgcn/tensor.hpp"

namespace blockgcn {

enum class DistanceKind { shortest_path, level_difference };

struct DistanceMatrix {
  std::int64_t v = 0;
  std::vector<std::int64_t> d;  // row-major V*V hop counts
  DistanceKind kind = DistanceKind::shortest_path;

  std::int64_t at(std::int64_t i, std::int64_t j) const { return d[static_cast<std::size_t>(i * v + j)]; }
  std::int64_t max_entry() const;
  Tensor to_tensor() const;
};

// Body graph: joints as vertices, bones as undirected edges. Bone skeletons
// are trees, but the distance operations accept any connected graph.
struct Skeleton {
  std::int64_t num_joints = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  std::int64_t root = 0;
  std::vector<std::int64_t> parent;  // BFS tree parent; parent[root] = root
  std::vector<std::string> joint_names;

  static Skeleton from_edges(std::int64_t num_joints,
                             std::vector<std::pair<std::int64_t, std::int64_t>> edges,
                             std::int64_t root = 0);
  static Skeleton from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;

  bool is_tree() const;
  std::vector<std::vector<std::int64_t>> adjacency_lists() const;
};

// All-pairs BFS hop counts. Throws TopologyError on a disconnected graph.
DistanceMatrix shortest_path_distances(const Skeleton& s);

// d[i][j] = |depth(i) - depth(j)| with depth = BFS level from the root.
DistanceMatrix level_difference_distances(const Skeleton& s);

// 0/1 bone matrix with identity added on the diagonal; optionally the
// symmetric degree normalization D^{-1/2} (A+I) D^{-1/2}.
Tensor bone_adjacency(const Skeleton& s, bool normalize);

// Bundled topologies: "ntu25", "nwucla20", "tiny5". Loaded from the data
// directory (see set_skeleton_data_dir).
Skeleton preset(const std::string& name);

// Override the directory holding the bundled skeleton JSON files. Resolution
// order: explicit call here, then $BLOCKGCN_DATA_DIR, then the path compiled
// in at build time.
void set_skeleton_data_dir(const std::string& dir);
std::string skeleton_data_dir();

}  // namespace blockgcn
