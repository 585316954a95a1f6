#include "blockgcn/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <queue>
#include <set>

#include "blockgcn/error.hpp"
#include "json.hpp"

namespace blockgcn {

namespace {

std::string g_data_dir;  // empty -> fall back to env var / compiled default

std::vector<std::int64_t> bfs_depths(const Skeleton& s, std::int64_t start) {
  std::vector<std::int64_t> depth(static_cast<std::size_t>(s.num_joints), -1);
  const auto adj = s.adjacency_lists();
  std::queue<std::int64_t> q;
  depth[static_cast<std::size_t>(start)] = 0;
  q.push(start);
  while (!q.empty()) {
    const std::int64_t u = q.front();
    q.pop();
    for (std::int64_t w : adj[static_cast<std::size_t>(u)]) {
      if (depth[static_cast<std::size_t>(w)] < 0) {
        depth[static_cast<std::size_t>(w)] = depth[static_cast<std::size_t>(u)] + 1;
        q.push(w);
      }
    }
  }
  return depth;
}

}  // namespace

std::int64_t DistanceMatrix::max_entry() const {
  std::int64_t m = 0;
  for (std::int64_t x : d) m = std::max(m, x);
  return m;
}

Tensor DistanceMatrix::to_tensor() const {
  Tensor t({v, v});
  for (std::int64_t i = 0; i < v * v; ++i) t[i] = static_cast<double>(d[static_cast<std::size_t>(i)]);
  return t;
}

Skeleton Skeleton::from_edges(std::int64_t num_joints,
                              std::vector<std::pair<std::int64_t, std::int64_t>> edges,
                              std::int64_t root) {
  if (num_joints < 1) throw TopologyError("skeleton needs at least one joint");
  if (root < 0 || root >= num_joints) throw TopologyError("root joint index out of range");
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (auto& [a, b] : edges) {
    if (a < 0 || a >= num_joints || b < 0 || b >= num_joints) {
      throw TopologyError("edge endpoint out of range: " + std::to_string(a) + "-" +
                          std::to_string(b));
    }
    if (a == b) throw TopologyError("self-loop on joint " + std::to_string(a));
    const auto key = std::minmax(a, b);
    if (!seen.insert(key).second) {
      throw TopologyError("duplicate edge " + std::to_string(key.first) + "-" +
                          std::to_string(key.second));
    }
  }
  Skeleton s;
  s.num_joints = num_joints;
  s.edges = std::move(edges);
  s.root = root;
  const auto depth = bfs_depths(s, root);
  s.parent.assign(static_cast<std::size_t>(num_joints), -1);
  s.parent[static_cast<std::size_t>(root)] = root;
  for (const auto& [a, b] : s.edges) {
    const std::int64_t da = depth[static_cast<std::size_t>(a)];
    const std::int64_t db = depth[static_cast<std::size_t>(b)];
    if (da >= 0 && db == da + 1) s.parent[static_cast<std::size_t>(b)] = a;
    if (db >= 0 && da == db + 1) s.parent[static_cast<std::size_t>(a)] = b;
  }
  return s;
}

bool Skeleton::is_tree() const {
  if (static_cast<std::int64_t>(edges.size()) != num_joints - 1) return false;
  const auto depth = bfs_depths(*this, root);
  return std::none_of(depth.begin(), depth.end(), [](std::int64_t d) { return d < 0; });
}

std::vector<std::vector<std::int64_t>> Skeleton::adjacency_lists() const {
  std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(num_joints));
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  return adj;
}

Skeleton Skeleton::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open skeleton file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed skeleton file " + path + ": " + e.what());
  }
  if (!j.contains("num_joints") || !j.contains("edges")) {
    throw IoError("skeleton file " + path + " missing num_joints or edges");
  }
  const std::int64_t v = j.at("num_joints").get<std::int64_t>();
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw IoError("edge entries must be [i, j] pairs");
    edges.emplace_back(e[0].get<std::int64_t>(), e[1].get<std::int64_t>());
  }
  const std::int64_t root = j.value("root", std::int64_t{0});
  Skeleton s = from_edges(v, std::move(edges), root);
  if (j.contains("joint_names")) {
    s.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    if (static_cast<std::int64_t>(s.joint_names.size()) != v) {
      throw IoError("joint_names length does not match num_joints in " + path);
    }
  }
  return s;
}

void Skeleton::to_json_file(const std::string& path) const {
  nlohmann::json j;
  j["num_joints"] = num_joints;
  j["root"] = root;
  auto& je = j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : edges) je.push_back({a, b});
  if (!joint_names.empty()) j["joint_names"] = joint_names;
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
}

DistanceMatrix shortest_path_distances(const Skeleton& s) {
  const std::int64_t v = s.num_joints;
  DistanceMatrix dm;
  dm.v = v;
  dm.kind = DistanceKind::shortest_path;
  dm.d.assign(static_cast<std::size_t>(v * v), 0);
  for (std::int64_t i = 0; i < v; ++i) {
    const auto depth = bfs_depths(s, i);
    for (std::int64_t j = 0; j < v; ++j) {
      if (depth[static_cast<std::size_t>(j)] < 0) {
        throw TopologyError("graph is disconnected: no path " + std::to_string(i) + " -> " +
                            std::to_string(j));
      }
      dm.d[static_cast<std::size_t>(i * v + j)] = depth[static_cast<std::size_t>(j)];
    }
  }
  return dm;
}

DistanceMatrix level_difference_distances(const Skeleton& s) {
  const std::int64_t v = s.num_joints;
  const auto depth = bfs_depths(s, s.root);
  for (std::int64_t j = 0; j < v; ++j) {
    if (depth[static_cast<std::size_t>(j)] < 0) {
      throw TopologyError("graph is disconnected: joint " + std::to_string(j) +
                          " unreachable from root");
    }
  }
  DistanceMatrix dm;
  dm.v = v;
  dm.kind = DistanceKind::level_difference;
  dm.d.assign(static_cast<std::size_t>(v * v), 0);
  for (std::int64_t i = 0; i < v; ++i) {
    for (std::int64_t j = 0; j < v; ++j) {
      dm.d[static_cast<std::size_t>(i * v + j)] =
          std::abs(depth[static_cast<std::size_t>(i)] - depth[static_cast<std::size_t>(j)]);
    }
  }
  return dm;
}

Tensor bone_adjacency(const Skeleton& s, bool normalize) {
  const std::int64_t v = s.num_joints;
  Tensor a({v, v});
  for (std::int64_t i = 0; i < v; ++i) a.at({i, i}) = 1.0;
  for (const auto& [x, y] : s.edges) {
    a.at({x, y}) = 1.0;
    a.at({y, x}) = 1.0;
  }
  if (!normalize) return a;
  std::vector<double> inv_sqrt(static_cast<std::size_t>(v));
  for (std::int64_t i = 0; i < v; ++i) {
    double deg = 0.0;
    for (std::int64_t j = 0; j < v; ++j) deg += a.at({i, j});
    inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg);
  }
  for (std::int64_t i = 0; i < v; ++i) {
    for (std::int64_t j = 0; j < v; ++j) {
      a.at({i, j}) *= inv_sqrt[static_cast<std::size_t>(i)] * inv_sqrt[static_cast<std::size_t>(j)];
    }
  }
  return a;
}

void set_skeleton_data_dir(const std::string& dir) { g_data_dir = dir; }

std::string skeleton_data_dir() {
  if (!g_data_dir.empty()) return g_data_dir;
  if (const char* env = std::getenv("BLOCKGCN_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
#ifdef BLOCKGCN_DATA_DIR
  return BLOCKGCN_DATA_DIR;
#else
  return "data/skeletons";
#endif
}

Skeleton preset(const std::string& name) {
  if (name != "ntu25" && name != "tiny5" && name != "nwucla20") {
    throw TopologyError("unknown skeleton preset: " + name);
  }
  return Skeleton::from_json_file(skeleton_data_dir() + "/" + name + ".json");
}

}  // namespace blockgcn
