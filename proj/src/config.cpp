#include "blockgcn/config.hpp"

#include <fstream>
#include <sstream>

#include "blockgcn/error.hpp"

namespace blockgcn {

std::map<std::string, std::string> parse_kv_text(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    std::size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(start, end - start + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  return parse_kv_text(is, path);
}

void write_kv(std::ostream& os, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) os << key << "=" << value << "\n";
}

void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_kv(os, kv);
}

void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const std::size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must be key=value, got '" + o + "'");
    }
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
}

}  // namespace blockgcn
