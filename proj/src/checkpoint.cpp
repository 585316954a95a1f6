#include "blockgcn/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "blockgcn/error.hpp"

namespace blockgcn {

namespace {

constexpr const char* kMagic = "BLOCKGCN-CKPT v1";

std::string next_line(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) {
    throw IoError("checkpoint " + path + ": truncated header");
  }
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state, Modality modality) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os << kMagic << "\n";
  os << "modality " << to_string(modality) << "\n";

  const auto kv = state.config.to_kv();
  os << "config " << kv.size() << "\n";
  for (const auto& [key, value] : kv) os << key << "=" << value << "\n";

  const Skeleton& s = state.skeleton;
  os << "skeleton " << s.num_joints << " " << s.root << " " << s.edges.size() << "\n";
  for (const auto& [a, b] : s.edges) os << a << " " << b << "\n";

  const auto tensors = state.named_tensors();
  os << "tensors " << tensors.size() << "\n";
  for (const auto& [name, t] : tensors) {
    os << name << "\n";
    write_tensor(os, *t);
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
}

ModelState load_checkpoint(const std::string& path, Modality* modality) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  if (next_line(is, path) != kMagic) {
    throw IoError("checkpoint " + path + ": bad magic line");
  }

  std::string word;
  std::istringstream mline(next_line(is, path));
  Modality m = Modality::joint;
  if (!(mline >> word) || word != "modality" || !(mline >> word)) {
    throw IoError("checkpoint " + path + ": bad modality line");
  }
  m = modality_from_string(word);

  std::istringstream cline(next_line(is, path));
  std::size_t nconfig = 0;
  if (!(cline >> word >> nconfig) || word != "config") {
    throw IoError("checkpoint " + path + ": bad config line");
  }
  std::map<std::string, std::string> kv;
  for (std::size_t i = 0; i < nconfig; ++i) {
    const std::string line = next_line(is, path);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("checkpoint " + path + ": malformed config entry: " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const ModelConfig config = ModelConfig::from_kv(kv);

  std::istringstream sline(next_line(is, path));
  std::int64_t joints = 0, root = 0;
  std::size_t nedges = 0;
  if (!(sline >> word >> joints >> root >> nedges) || word != "skeleton") {
    throw IoError("checkpoint " + path + ": bad skeleton line");
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  edges.reserve(nedges);
  for (std::size_t i = 0; i < nedges; ++i) {
    std::istringstream eline(next_line(is, path));
    std::int64_t a = 0, b = 0;
    if (!(eline >> a >> b)) {
      throw IoError("checkpoint " + path + ": malformed edge line");
    }
    edges.emplace_back(a, b);
  }
  const Skeleton skeleton = Skeleton::from_edges(joints, std::move(edges), root);

  std::istringstream tline(next_line(is, path));
  std::size_t ntensors = 0;
  if (!(tline >> word >> ntensors) || word != "tensors") {
    throw IoError("checkpoint " + path + ": bad tensors line");
  }

  ModelState state = ModelState::init_with_skeleton(config, skeleton, 0);
  auto entries = state.named_tensors();
  if (ntensors != entries.size()) {
    throw IoError("checkpoint " + path + ": expected " + std::to_string(entries.size()) +
                  " tensors, file has " + std::to_string(ntensors));
  }
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, t] : entries) by_name[name] = t;
  std::size_t filled = 0;
  for (std::size_t i = 0; i < ntensors; ++i) {
    const std::string name = next_line(is, path);
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second == nullptr) {
      throw IoError("checkpoint " + path + ": unknown or repeated tensor: " + name);
    }
    Tensor stored = read_tensor(is);
    if (!stored.same_shape(*it->second)) {
      throw ShapeError("checkpoint " + path + ": shape mismatch for " + name + ": stored " +
                       stored.shape_str() + " vs model " + it->second->shape_str());
    }
    *it->second = std::move(stored);
    it->second = nullptr;
    ++filled;
  }
  if (filled != entries.size()) {
    throw IoError("checkpoint " + path + ": missing tensors");
  }
  if (modality != nullptr) *modality = m;
  return state;
}

}  // namespace blockgcn
